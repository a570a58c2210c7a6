"""Particle-swarm refinement of a coarse channel-count vector.

Particles are candidate width vectors over the prunable layers. Positions are
real-valued internally; a structure is rounded (half away from zero) and
clamped to [1, original] only when handed to the fitness evaluator. The
evaluator is any callable object with ``evaluate(structure) -> float``; the
bundled one trains the candidate from fresh weights for a few epochs and
scores it by its best test accuracy.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import archspec
from .errors import BoundsError, PruneKitError
from .util import derive_seed, round_half_away, write_text_atomic

GBEST_ITERATION = "iteration"
GBEST_IMMEDIATE = "immediate"


@dataclass(frozen=True)
class SwarmConfig:
    """Search hyperparameters.

    ``gbest_update`` selects when a new global best becomes visible to other
    particles: "iteration" (default) applies it after all of an iteration's
    evaluations, which keeps the per-iteration evaluations independent;
    "immediate" applies it inside the particle loop.
    """

    particles: int = 20
    iterations: int = 30
    v_max: float = 4.0
    alpha1: float = 2.0
    alpha2: float = 2.0
    learning_rate: float = 2.0
    w_ini: float = 0.9
    w_snd: float = 0.4
    proxy_epochs: int = 2
    seed: int | None = None  # None lets a caller derive one; treated as 0 here
    gbest_update: str = GBEST_ITERATION

    def __post_init__(self):
        if self.particles < 1:
            raise BoundsError(f"particles must be >= 1, got {self.particles}")
        if self.iterations < 1:
            raise BoundsError(f"iterations must be >= 1, got {self.iterations}")
        if self.v_max <= 0:
            raise BoundsError(f"v_max must be > 0, got {self.v_max}")
        if not self.w_ini >= self.w_snd >= 0:
            raise BoundsError(
                f"need w_ini >= w_snd >= 0, got {self.w_ini}, {self.w_snd}")
        if self.proxy_epochs < 1:
            raise BoundsError(f"proxy_epochs must be >= 1, got {self.proxy_epochs}")
        if self.gbest_update not in (GBEST_ITERATION, GBEST_IMMEDIATE):
            raise BoundsError(f"unknown gbest_update mode {self.gbest_update!r}")


@dataclass
class Particle:
    position: np.ndarray   # real-valued
    velocity: np.ndarray
    pbest: tuple           # integer structure as evaluated
    pbest_fitness: float


@dataclass
class SwarmState:
    particles: list
    gbest: tuple
    gbest_fitness: float
    iteration: int
    rng: np.random.Generator


def inertia(t: int, config: SwarmConfig) -> float:
    """Linearly annealed inertia weight at iteration t of T."""
    if not 0 <= t <= config.iterations:
        raise BoundsError(f"iteration {t} outside [0, {config.iterations}]")
    T = config.iterations
    return (config.w_ini - config.w_snd) * (T - t) / T + config.w_snd


def evaluated_structure(position: np.ndarray, bounds) -> archspec.NetworkStructure:
    """Integer structure submitted for fitness: round half away, then clamp."""
    ints = round_half_away(np.asarray(position, dtype=np.float64))
    clamped = np.clip(ints, 1, np.asarray(bounds, dtype=np.int64))
    return archspec.NetworkStructure(tuple(int(v) for v in clamped))


def init_population(coarse, bounds, evaluator, config: SwarmConfig,
                    rng=None, trace=None) -> SwarmState:
    """Population seeded around the coarse structure.

    Particle i (1-indexed) starts at clamp(coarse + i * delta, 1, bounds)
    with delta drawn per layer from {-1, 0, 1}. RNG draw order: one delta
    vector per particle in particle order, then one uniform velocity vector
    per particle in particle order.
    """
    coarse = np.asarray(tuple(coarse), dtype=np.int64)
    bounds_arr = np.asarray(tuple(bounds), dtype=np.int64)
    if coarse.shape != bounds_arr.shape:
        raise BoundsError(f"coarse length {coarse.size} != bounds length {bounds_arr.size}")
    if np.any(coarse > bounds_arr):
        raise BoundsError("coarse structure exceeds the original widths")
    if rng is None:
        rng = np.random.default_rng(derive_seed(config.seed or 0, "swarm"))
    L = coarse.size
    positions = []
    for i in range(1, config.particles + 1):
        delta = rng.integers(-1, 2, size=L)
        pos = np.clip(coarse + i * delta, 1, bounds_arr).astype(np.float64)
        positions.append(pos)
    particles = []
    for pos in positions:
        vel = rng.uniform(-config.v_max, config.v_max, size=L)
        particles.append(Particle(pos, vel, (), -np.inf))

    records = []
    for idx, p in enumerate(particles):
        structure = evaluated_structure(p.position, bounds_arr)
        fitness = _evaluate(evaluator, structure, 0, idx)
        p.pbest = tuple(structure)
        p.pbest_fitness = fitness
        records.append({"iteration": 0, "particle": idx,
                        "structure": list(structure), "fitness": fitness,
                        "is_pbest": True, "is_gbest": False})
    best_idx = 0
    for idx in range(1, len(particles)):
        if particles[idx].pbest_fitness > particles[best_idx].pbest_fitness:
            best_idx = idx
    records[best_idx]["is_gbest"] = True
    if trace is not None:
        trace.extend(records)
    return SwarmState(particles, particles[best_idx].pbest,
                      particles[best_idx].pbest_fitness, 0, rng)


def update_velocity(particle: Particle, gbest, t: int, config: SwarmConfig, rng):
    """One velocity step; always clamped component-wise to [-v_max, v_max].

    Draws two uniform vectors per call: first for the pbest pull, then for
    the gbest pull, each with an independent value per layer.
    """
    w = inertia(t, config)
    L = particle.position.size
    r1 = rng.random(L)
    r2 = rng.random(L)
    pull_self = config.alpha1 * r1 * (np.asarray(particle.pbest, dtype=np.float64) - particle.position)
    pull_all = config.alpha2 * r2 * (np.asarray(tuple(gbest), dtype=np.float64) - particle.position)
    v = w * particle.velocity + pull_self + pull_all
    particle.velocity = np.clip(v, -config.v_max, config.v_max)
    return particle.velocity


def update_position(particle: Particle, config: SwarmConfig):
    """Advance the real-valued position by learning_rate * velocity."""
    particle.position = particle.position + config.learning_rate * particle.velocity
    return particle.position


def _evaluate(evaluator, structure, iteration, particle_idx):
    try:
        return float(evaluator.evaluate(structure))
    except PruneKitError:
        raise
    except Exception as exc:
        raise PruneKitError(
            f"fitness evaluation failed at iteration {iteration}, "
            f"particle {particle_idx}: {exc}") from exc


def _state_to_dict(state: SwarmState) -> dict:
    return {
        "iteration": state.iteration,
        "gbest": list(state.gbest),
        "gbest_fitness": state.gbest_fitness,
        "particles": [
            {
                "position": [float(v) for v in p.position],
                "velocity": [float(v) for v in p.velocity],
                "pbest": list(p.pbest),
                "pbest_fitness": p.pbest_fitness,
            }
            for p in state.particles
        ],
        "rng_state": state.rng.bit_generator.state,
    }


def _state_from_dict(data: dict) -> SwarmState:
    particles = [
        Particle(np.asarray(p["position"], dtype=np.float64),
                 np.asarray(p["velocity"], dtype=np.float64),
                 tuple(int(v) for v in p["pbest"]),
                 float(p["pbest_fitness"]))
        for p in data["particles"]
    ]
    rng = np.random.default_rng(0)
    rng.bit_generator.state = data["rng_state"]
    return SwarmState(particles, tuple(int(v) for v in data["gbest"]),
                      float(data["gbest_fitness"]), int(data["iteration"]), rng)


@dataclass
class SearchResult:
    best: archspec.NetworkStructure
    best_fitness: float
    history: list = field(default_factory=list)  # (iteration, gbest_fitness, mean_fitness)
    trace: list = field(default_factory=list)    # per-evaluation records


def search(coarse, bounds, evaluator, config: SwarmConfig,
           state_path=None, trace_path=None, resume=False) -> SearchResult:
    """Full swarm search refining ``coarse`` within [1, bounds] per layer.

    With ``state_path`` the complete swarm state (including the RNG) is
    persisted after initialization and after every iteration, and
    ``resume=True`` continues from whatever iteration that file holds; a
    resumed run reproduces the uninterrupted one exactly. ``trace_path``
    collects one JSON line per fitness evaluation.
    """
    bounds_arr = np.asarray(tuple(bounds), dtype=np.int64)
    trace: list = []
    history: list = []

    if resume and state_path is not None and os.path.exists(state_path):
        with open(state_path) as fh:
            state = _state_from_dict(json.load(fh))
    else:
        state = init_population(coarse, bounds_arr, evaluator, config, trace=trace)
        fits = [p.pbest_fitness for p in state.particles]
        history.append((0, state.gbest_fitness, float(np.mean(fits))))
        if state_path is not None:
            write_text_atomic(state_path, json.dumps(_state_to_dict(state)))
        _append_trace(trace_path, trace)

    while state.iteration < config.iterations:
        t = state.iteration + 1
        records = []
        fits = []
        gbest_before = state.gbest
        new_best_idx = None
        for idx, p in enumerate(state.particles):
            visible_gbest = state.gbest if config.gbest_update == GBEST_IMMEDIATE else gbest_before
            update_velocity(p, visible_gbest, t, config, state.rng)
            update_position(p, config)
            structure = evaluated_structure(p.position, bounds_arr)
            fitness = _evaluate(evaluator, structure, t, idx)
            fits.append(fitness)
            improved = fitness > p.pbest_fitness
            if improved:
                p.pbest = tuple(structure)
                p.pbest_fitness = fitness
            records.append({"iteration": t, "particle": idx,
                            "structure": list(structure), "fitness": fitness,
                            "is_pbest": improved, "is_gbest": False})
            if config.gbest_update == GBEST_IMMEDIATE and improved \
                    and fitness > state.gbest_fitness:
                state.gbest = p.pbest
                state.gbest_fitness = p.pbest_fitness
                records[idx]["is_gbest"] = True
        if config.gbest_update == GBEST_ITERATION:
            for idx, p in enumerate(state.particles):
                if p.pbest_fitness > state.gbest_fitness:
                    state.gbest = p.pbest
                    state.gbest_fitness = p.pbest_fitness
                    new_best_idx = idx
            if new_best_idx is not None:
                records[new_best_idx]["is_gbest"] = True
        state.iteration = t
        trace.extend(records)
        history.append((t, state.gbest_fitness, float(np.mean(fits))))
        if state_path is not None:
            write_text_atomic(state_path, json.dumps(_state_to_dict(state)))
        _append_trace(trace_path, records)

    return SearchResult(archspec.NetworkStructure(state.gbest),
                        state.gbest_fitness, history, trace)


def _append_trace(trace_path, records) -> None:
    if trace_path is None or not records:
        return
    with open(trace_path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class ProxyFitnessEvaluator:
    """Fitness of a structure: best test accuracy over a short fresh train.

    Deterministic: the training seed is derived from the evaluator seed and
    the structure itself, so a structure's fitness does not depend on when
    or how often it is evaluated. Results are cached per structure.
    """

    def __init__(self, template, train_images, train_labels, test_images,
                 test_labels, proxy_epochs=2, seed=0, batch_size=128,
                 initial_lr=0.1, lr_drops=((0.5, 10.0), (0.75, 10.0)),
                 momentum=0.9, weight_decay=1e-4):
        from .nncore import TrainConfig  # deferred: keeps module import light
        if proxy_epochs < 1:
            raise BoundsError(f"proxy_epochs must be >= 1, got {proxy_epochs}")
        self.template = template
        self.data = (train_images, train_labels, test_images, test_labels)
        self.proxy_epochs = int(proxy_epochs)
        self.seed = int(seed)
        self._cfg_kwargs = dict(epochs=self.proxy_epochs, batch_size=batch_size,
                                initial_lr=initial_lr, lr_drops=tuple(lr_drops),
                                momentum=momentum, weight_decay=weight_decay)
        self._train_config_cls = TrainConfig
        self.cache: dict = {}
        self.evaluations = 0

    def evaluate(self, structure) -> float:
        key = tuple(int(v) for v in structure)
        if key in self.cache:
            return self.cache[key]
        from .nncore import Network, train
        run_seed = derive_seed(self.seed, "proxy", *key)
        pruned = archspec.instantiate(self.template, key)
        net = Network(pruned, seed=derive_seed(run_seed, "init"))
        cfg = self._train_config_cls(seed=run_seed, **self._cfg_kwargs)
        tr_x, tr_y, te_x, te_y = self.data
        history = train(net, tr_x, tr_y, te_x, te_y, cfg)
        fitness = max(h.test_accuracy for h in history)
        self.cache[key] = fitness
        self.evaluations += 1
        return fitness


def proxy_fitness(structure, template, train_images, train_labels,
                  test_images, test_labels, proxy_epochs=2, seed=0, **kwargs) -> float:
    """One-shot convenience wrapper around ProxyFitnessEvaluator."""
    ev = ProxyFitnessEvaluator(template, train_images, train_labels,
                               test_images, test_labels,
                               proxy_epochs=proxy_epochs, seed=seed, **kwargs)
    return ev.evaluate(structure)

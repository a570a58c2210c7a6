"""End-to-end orchestration of the pruning experiment.

Five sequential stages, each leaving artifacts under a run directory named
by a hash of the experiment configuration plus the seed:

    1. baseline   train (or reuse) the full-width model      baseline.ckpt
    2. coarse     cluster feature maps into a width vector   coarse.json
    3. search     particle-swarm refinement                  search.json (+ swarm_state.json)
    4. retrain    final structure from scratch               final.ckpt
    5. report     JSON + table                               report.json / report.txt

A finished baseline is always reused on rerun since it dominates cost.
With ``resume=True`` every other completed stage is reused as well, and an
interrupted search continues from its last iteration checkpoint; because
each stage is deterministic given the config and seed, a resumed run ends
in the same report as an uninterrupted one.

All stage seeds are derived from the single experiment seed, so one integer
pins the entire run.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import archspec, cluster, data, featstats, swarm
from .errors import BoundsError, DataFormatError, PruneKitError
from .nncore import Network, TrainConfig, evaluate, load_model, save_model, train
from .report import RunReport, render_table
from .util import canonical_json, derive_seed, sha256_hex, write_text_atomic

STAGES = ("baseline", "coarse", "search", "retrain", "report")


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "synthetic"
    path: str = "."
    num_classes: int = 4
    train_size: int = 512
    test_size: int = 256
    image_size: int = 16
    channels: int = 3
    noise: float = 0.15

    def synthetic_spec(self, seed: int) -> data.SyntheticSpec:
        return data.SyntheticSpec(
            num_classes=self.num_classes, train_size=self.train_size,
            test_size=self.test_size, image_size=self.image_size,
            channels=self.channels, noise=self.noise, seed=seed)


@dataclass(frozen=True)
class TrainerConfig:
    """Optimizer recipe shared by baseline, proxy, and retrain stages."""

    batch_size: int = 128
    initial_lr: float = 0.1
    lr_drops: tuple = ((0.5, 10.0), (0.75, 10.0))
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def train_config(self, epochs: int, seed: int) -> TrainConfig:
        return TrainConfig(epochs=epochs, batch_size=self.batch_size,
                           initial_lr=self.initial_lr,
                           lr_drops=tuple(tuple(d) for d in self.lr_drops),
                           momentum=self.momentum,
                           weight_decay=self.weight_decay, seed=seed)


@dataclass(frozen=True)
class ExperimentConfig:
    template: str = "tiny4"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    sample_count: int = 128
    epsilon: float = 0.05
    min_pts: int = 5
    baseline_epochs: int = 160
    swarm: swarm.SwarmConfig = field(default_factory=swarm.SwarmConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    out_dir: str = "runs"
    seed: int = 0
    dump_similarity: bool = False

    def __post_init__(self):
        if self.sample_count < 1:
            raise BoundsError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.baseline_epochs < 1:
            raise BoundsError(f"baseline_epochs must be >= 1, got {self.baseline_epochs}")
        cluster.NeighborhoodParams(self.epsilon, self.min_pts)  # validates

    def neighborhood(self) -> cluster.NeighborhoodParams:
        return cluster.NeighborhoodParams(self.epsilon, self.min_pts)

    def identity_dict(self) -> dict:
        """Everything that affects results; excludes out_dir and seed.

        A swarm seed of None means "derived from the experiment seed" and so
        carries no identity of its own; an explicit swarm seed does.
        """
        d = {
            "template": self.template,
            "dataset": asdict_frozen(self.dataset),
            "sample_count": self.sample_count,
            "epsilon": self.epsilon,
            "min_pts": self.min_pts,
            "baseline_epochs": self.baseline_epochs,
            "swarm": asdict_frozen(self.swarm),
            "trainer": asdict_frozen(self.trainer),
        }
        if d["swarm"].get("seed") is None:
            d["swarm"].pop("seed", None)
        return d

    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.identity_dict()).encode())[:12]

    def run_dir(self) -> str:
        return os.path.join(self.out_dir, f"{self.template}-{self.config_hash()}-s{self.seed}")


def asdict_frozen(obj) -> dict:
    d = asdict(obj)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
    return d


def load_config(path) -> ExperimentConfig:
    """Build an ExperimentConfig from a YAML file of nested sections."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    kwargs = {}
    for key in ("template", "sample_count", "epsilon", "min_pts",
                "baseline_epochs", "seed", "dump_similarity"):
        if key in raw:
            kwargs[key] = raw[key]
    if "out" in raw:
        kwargs["out_dir"] = raw["out"]
    if "out_dir" in raw:
        kwargs["out_dir"] = raw["out_dir"]
    if "neighborhood" in raw:
        nb = raw["neighborhood"]
        if "epsilon" in nb:
            kwargs["epsilon"] = nb["epsilon"]
        if "min_pts" in nb:
            kwargs["min_pts"] = nb["min_pts"]
    if "dataset" in raw:
        kwargs["dataset"] = DatasetConfig(**raw["dataset"])
    if "swarm" in raw:
        kwargs["swarm"] = swarm.SwarmConfig(**raw["swarm"])
    if "trainer" in raw:
        tr = dict(raw["trainer"])
        if "lr_drops" in tr:
            tr["lr_drops"] = tuple(tuple(d) for d in tr["lr_drops"])
        kwargs["trainer"] = TrainerConfig(**tr)
    return ExperimentConfig(**kwargs)


def retrain_epochs(baseline_epochs: int, original_flops: int, pruned_flops: int) -> int:
    """Retraining budget: baseline epochs scaled by the FLOP compression.

    round(baseline * original / pruned), never below the baseline count.
    """
    if baseline_epochs < 1:
        raise BoundsError(f"baseline_epochs must be >= 1, got {baseline_epochs}")
    if original_flops <= 0 or pruned_flops <= 0:
        raise BoundsError("FLOP counts must be positive")
    if pruned_flops > original_flops:
        raise BoundsError(
            f"pruned FLOPs {pruned_flops} exceed original {original_flops}")
    return max(baseline_epochs, round(baseline_epochs * original_flops / pruned_flops))


class ExperimentRun:
    """Stage runner bound to one config; stages share loaded data and models."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.run_dir = config.run_dir()
        os.makedirs(self.run_dir, exist_ok=True)
        self.template = self._resolve_template()
        self.train_set, self.test_set = self._load_data()
        if tuple(self.train_set.input_shape) != tuple(self.template.input_shape):
            raise PruneKitError(
                f"dataset input shape {self.train_set.input_shape} does not "
                f"match template input {self.template.input_shape}")
        self.stage_seconds: dict = {}

    def _resolve_template(self) -> archspec.ArchTemplate:
        return archspec.get_template(self.config.template,
                                     num_classes=self.config.dataset.num_classes)

    def _load_data(self):
        cfg = self.config.dataset
        spec = None
        if cfg.name == "synthetic":
            spec = cfg.synthetic_spec(derive_seed(self.config.seed, "data"))
        return data.load_dataset(cfg.path, cfg.name, synthetic_spec=spec)

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    def _timed(self, stage, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            self._record_failure(stage, exc)
            raise
        self.stage_seconds[stage] = time.perf_counter() - start
        return result

    def _record_failure(self, stage, exc) -> None:
        report = RunReport(
            dataset_name=self.config.dataset.name,
            template_name=self.template.name,
            epsilon=self.config.epsilon, min_pts=self.config.min_pts,
            original_structure=list(self.template.original_structure()),
            coarse_structure=[], final_structure=[],
            stage_seconds=dict(self.stage_seconds),
            config_hash=self.config.config_hash(), seed=self.config.seed,
            failed_stage=stage, error=f"{type(exc).__name__}: {exc}")
        report.save(self.path("report.json"))

    # -- stage 1 ------------------------------------------------------------
    def stage_baseline(self):
        """Train the full-width model, or load it if this run dir has one."""
        def work():
            ckpt = self.path("baseline.ckpt")
            meta_path = self.path("baseline.json")
            net = Network(self.template, seed=derive_seed(self.config.seed, "baseline", "init"))
            if os.path.exists(ckpt) and os.path.exists(meta_path):
                load_model(ckpt, net)
                with open(meta_path) as fh:
                    meta = json.load(fh)
                return net, meta
            cfg = self.config.trainer.train_config(
                self.config.baseline_epochs, derive_seed(self.config.seed, "baseline"))
            history = train(net, self.train_set.images, self.train_set.labels,
                            self.test_set.images, self.test_set.labels, cfg,
                            trace_path=self.path("baseline_trace.csv"))
            save_model(ckpt, net)
            meta = {
                "accuracy": history[-1].test_accuracy,
                "best_accuracy": max(h.test_accuracy for h in history),
                "params": archspec.param_count(self.template),
                "flops": archspec.flops_count(self.template),
                "epochs": self.config.baseline_epochs,
                "weight_init": "kaiming-fan-in",
            }
            write_text_atomic(meta_path, json.dumps(meta, indent=2) + "\n")
            return net, meta
        return self._timed("baseline", work)

    # -- stage 2 ------------------------------------------------------------
    def stage_coarse(self, net, resume=False):
        def work():
            out_path = self.path("coarse.json")
            if resume and os.path.exists(out_path):
                with open(out_path) as fh:
                    saved = json.load(fh)
                return archspec.NetworkStructure(tuple(saved["structure"])), saved
            samples = data.sample_images(self.train_set, self.config.sample_count,
                                         derive_seed(self.config.seed, "sample"))
            sink = None
            if self.config.dump_similarity:
                def sink(slot, sim):
                    featstats.dump_similarity_csv(
                        self.path(f"similarity_slot{slot:02d}.csv"), sim)
            structure, reports = cluster.coarse_prune(
                self.template, net, samples, self.config.neighborhood(),
                similarity_sink=sink)
            saved = {
                "structure": list(structure),
                "original": list(self.template.original_structure()),
                "epsilon": self.config.epsilon,
                "min_pts": self.config.min_pts,
                "sample_count": self.config.sample_count,
                "layers": [r.to_dict() for r in reports],
            }
            write_text_atomic(out_path, json.dumps(saved, indent=2) + "\n")
            return structure, saved
        return self._timed("coarse", work)

    # -- stage 3 ------------------------------------------------------------
    def stage_search(self, coarse_structure, resume=False):
        def work():
            out_path = self.path("search.json")
            if resume and os.path.exists(out_path):
                with open(out_path) as fh:
                    saved = json.load(fh)
                return archspec.NetworkStructure(tuple(saved["best"])), saved
            swarm_cfg = self.config.swarm
            if swarm_cfg.seed is None:
                swarm_cfg = replace(swarm_cfg, seed=derive_seed(self.config.seed, "search"))
            evaluator = swarm.ProxyFitnessEvaluator(
                self.template,
                self.train_set.images, self.train_set.labels,
                self.test_set.images, self.test_set.labels,
                proxy_epochs=swarm_cfg.proxy_epochs,
                seed=derive_seed(self.config.seed, "proxy"),
                batch_size=self.config.trainer.batch_size,
                initial_lr=self.config.trainer.initial_lr,
                lr_drops=self.config.trainer.lr_drops,
                momentum=self.config.trainer.momentum,
                weight_decay=self.config.trainer.weight_decay)
            trace_path = self.path("swarm_trace.jsonl")
            if not resume and os.path.exists(trace_path):
                os.remove(trace_path)
            result = swarm.search(
                coarse_structure, self.template.original_structure(), evaluator,
                swarm_cfg, state_path=self.path("swarm_state.json"),
                trace_path=trace_path, resume=resume)
            saved = {
                "best": list(result.best),
                "best_fitness": result.best_fitness,
                "history": [list(h) for h in result.history],
                "evaluations": evaluator.evaluations,
            }
            write_text_atomic(out_path, json.dumps(saved, indent=2) + "\n")
            return result.best, saved
        return self._timed("search", work)

    # -- stage 4 ------------------------------------------------------------
    def stage_retrain(self, final_structure, resume=False):
        def work():
            out_path = self.path("retrain.json")
            if resume and os.path.exists(out_path) and os.path.exists(self.path("final.ckpt")):
                with open(out_path) as fh:
                    return json.load(fh)
            pruned = archspec.instantiate(self.template, final_structure)
            orig_flops = archspec.flops_count(self.template)
            pruned_flops = archspec.flops_count(pruned)
            epochs = retrain_epochs(self.config.baseline_epochs, orig_flops, pruned_flops)
            net = Network(pruned, seed=derive_seed(self.config.seed, "retrain", "init"))
            cfg = self.config.trainer.train_config(
                epochs, derive_seed(self.config.seed, "retrain"))
            history = train(net, self.train_set.images, self.train_set.labels,
                            self.test_set.images, self.test_set.labels, cfg,
                            trace_path=self.path("final_trace.csv"))
            save_model(self.path("final.ckpt"), net)
            saved = {
                "structure": list(final_structure),
                "accuracy": history[-1].test_accuracy,
                "best_accuracy": max(h.test_accuracy for h in history),
                "params": archspec.param_count(pruned),
                "flops": pruned_flops,
                "retrain_epochs": epochs,
            }
            write_text_atomic(out_path, json.dumps(saved, indent=2) + "\n")
            return saved
        return self._timed("retrain", work)

    # -- stage 5 ------------------------------------------------------------
    def stage_report(self, baseline_meta, coarse_saved, retrain_saved):
        def work():
            param_drop, flop_drop = archspec.compression_report(
                self.template,
                archspec.NetworkStructure(tuple(self.template.original_structure())),
                archspec.NetworkStructure(tuple(retrain_saved["structure"])))
            report = RunReport(
                dataset_name=self.config.dataset.name,
                template_name=self.template.name,
                epsilon=self.config.epsilon,
                min_pts=self.config.min_pts,
                original_structure=list(self.template.original_structure()),
                coarse_structure=list(coarse_saved["structure"]),
                final_structure=list(retrain_saved["structure"]),
                baseline={
                    "accuracy": baseline_meta["accuracy"],
                    "params": baseline_meta["params"],
                    "flops": baseline_meta["flops"],
                    "epochs": baseline_meta["epochs"],
                },
                final={
                    "accuracy": retrain_saved["accuracy"],
                    "params": retrain_saved["params"],
                    "flops": retrain_saved["flops"],
                    "param_drop_percent": param_drop,
                    "flop_drop_percent": flop_drop,
                },
                retrain_epochs=retrain_saved["retrain_epochs"],
                stage_seconds=dict(self.stage_seconds),
                normalization={
                    "mean": self.train_set.metadata.get("standardize_mean"),
                    "std": self.train_set.metadata.get("standardize_std"),
                },
                config_hash=self.config.config_hash(),
                seed=self.config.seed)
            report.save(self.path("report.json"))
            write_text_atomic(self.path("report.txt"), render_table(report))
            return report
        return self._timed("report", work)


def run(config: ExperimentConfig, resume: bool = False,
        through: str = "report") -> RunReport | dict:
    """Execute stages in order up to ``through`` (default: the full pipeline).

    Returns the RunReport when the report stage runs, else the last stage's
    artifact dictionary.
    """
    if through not in STAGES:
        raise BoundsError(f"unknown stage {through!r}; expected one of {STAGES}")
    last = STAGES.index(through)
    runner = ExperimentRun(config)
    net, baseline_meta = runner.stage_baseline()
    if last == 0:
        return baseline_meta
    coarse_structure, coarse_saved = runner.stage_coarse(net, resume=resume)
    if last == 1:
        return coarse_saved
    best, search_saved = runner.stage_search(coarse_structure, resume=resume)
    if last == 2:
        return search_saved
    retrain_saved = runner.stage_retrain(best, resume=resume)
    if last == 3:
        return retrain_saved
    return runner.stage_report(baseline_meta, coarse_saved, retrain_saved)

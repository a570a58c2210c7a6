"""Density clustering of channels and the coarse width vector it implies.

Per prunable layer: DBSCAN over the channel distance matrix, then the layer's
coarse channel count is (#clusters + #noise channels). Clusters of mutually
redundant channels each contribute one kept channel; noise channels are kept
as-is since nothing resembles them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import archspec, featstats
from .errors import BoundsError, StructureError

NOISE = -1


@dataclass(frozen=True)
class NeighborhoodParams:
    """DBSCAN parameters. ``epsilon`` thresholds d = 1 - |cos|."""

    epsilon: float
    min_pts: int

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise BoundsError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.min_pts < 1:
            raise BoundsError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray      # per channel: cluster id >= 0, or NOISE
    core_flags: np.ndarray  # per channel: neighborhood size >= min_pts

    @property
    def num_clusters(self) -> int:
        ids = self.labels[self.labels != NOISE]
        return int(np.unique(ids).size)

    @property
    def num_noise(self) -> int:
        return int((self.labels == NOISE).sum())


def _check_distances(distances: np.ndarray) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise StructureError(f"distance matrix must be square, got {d.shape}")
    if d.shape[0] < 1:
        raise StructureError("distance matrix is empty")
    if np.abs(d - d.T).max() > 1e-9:
        raise StructureError("distance matrix is not symmetric")
    if np.abs(np.diagonal(d)).max() > 1e-9:
        raise StructureError("distance matrix diagonal is not zero")
    if d.min() < 0 or d.max() > 1 + 1e-9:
        raise StructureError("distance entries must lie in [0, 1]")
    return d


def dbscan(distances: np.ndarray, params: NeighborhoodParams) -> ClusterAssignment:
    """DBSCAN over a precomputed distance matrix.

    A channel's epsilon-neighborhood includes itself. Seed points are visited
    in ascending index order and cluster expansion is breadth-first, also in
    ascending order, which fixes border-point ties deterministically: a
    border channel joins the first cluster that reaches it.
    """
    d = _check_distances(distances)
    n = d.shape[0]
    if params.min_pts > n:
        raise BoundsError(f"min_pts {params.min_pts} exceeds channel count {n}")
    within = d <= params.epsilon
    neighbor_counts = within.sum(axis=1)
    core = neighbor_counts >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    next_id = 0
    for seed in range(n):
        if visited[seed] or not core[seed]:
            continue
        cluster_id = next_id
        next_id += 1
        queue = deque([seed])
        visited[seed] = True
        labels[seed] = cluster_id
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in np.flatnonzero(within[p]):
                if labels[q] == NOISE:
                    labels[q] = cluster_id
                if not visited[q]:
                    visited[q] = True
                    queue.append(q)
    return ClusterAssignment(labels, core)


def coarse_channel_count(assignment: ClusterAssignment) -> int:
    """Kept-channel count for one layer: distinct clusters plus noise."""
    return assignment.num_clusters + assignment.num_noise


@dataclass(frozen=True)
class LayerClusterReport:
    slot: int
    original_channels: int
    clusters: int
    noise: int
    coarse_channels: int

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "original_channels": self.original_channels,
            "clusters": self.clusters,
            "noise": self.noise,
            "coarse_channels": self.coarse_channels,
        }


def coarse_prune(template: archspec.ArchTemplate, net, sample_images: np.ndarray,
                 params: NeighborhoodParams, batch_size: int = 64,
                 similarity_sink=None):
    """Coarse width vector from clustering a trained model's feature maps.

    Runs the sample set through the network in evaluation mode, averages each
    prunable layer's activations over the samples, clusters channels by
    absolute-cosine distance, and keeps (#clusters + #noise) channels per
    layer. Returns ``(structure, reports)``.

    ``similarity_sink``, when given, is called with (slot, SimilarityMatrix)
    for each layer so callers can dump matrices for offline inspection.
    """
    if sample_images.shape[0] < 1:
        raise BoundsError("sample set is empty")
    slots = template.prunable_slots
    sums = {}
    n_total = sample_images.shape[0]
    for start in range(0, n_total, batch_size):
        batch = sample_images[start:start + batch_size]
        _, captured = net.forward(batch, train=False, capture=True)
        for slot in slots:
            acc = captured[slot].astype(np.float64).sum(axis=0)
            if slot in sums:
                sums[slot] += acc
            else:
                sums[slot] = acc
    counts = []
    reports = []
    for slot in slots:
        maps = featstats.ChannelMeanMaps(slot, sums[slot] / n_total)
        c = maps.channels
        if c == 1:
            # a lone channel is a core singleton cluster when min_pts == 1,
            # noise otherwise; the kept count is 1 either way
            counts.append(1)
            if params.min_pts == 1:
                reports.append(LayerClusterReport(slot, 1, 1, 0, 1))
            else:
                reports.append(LayerClusterReport(slot, 1, 0, 1, 1))
            continue
        if params.min_pts > c:
            # neighborhoods can never reach min_pts: everything is noise
            counts.append(c)
            reports.append(LayerClusterReport(slot, c, 0, c, c))
            continue
        sim = featstats.similarity(maps)
        if similarity_sink is not None:
            similarity_sink(slot, sim)
        assignment = dbscan(featstats.distance_matrix(sim), params)
        kept = coarse_channel_count(assignment)
        counts.append(kept)
        reports.append(LayerClusterReport(
            slot, c, assignment.num_clusters, assignment.num_noise, kept))
    return archspec.NetworkStructure(tuple(counts)), reports

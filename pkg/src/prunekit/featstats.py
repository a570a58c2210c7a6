"""Sample-averaged channel maps and their pairwise cosine similarities.

For a captured activation tensor (samples, channels, height, width) the mean
map of a channel is its element-wise average over the sample axis. Channel
similarity is the absolute cosine between flattened mean maps; the distance
handed to clustering is 1 minus that, so small epsilon means "nearly
parallel mean maps".
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, StructureError

METRIC_ABS_COSINE = "abs-cosine"


@dataclass(frozen=True)
class ChannelMeanMaps:
    """Per-channel mean activation maps for one prunable layer."""

    layer_index: int
    maps: np.ndarray  # (channels, height, width)

    def __post_init__(self):
        if self.maps.ndim != 3:
            raise StructureError(f"mean maps must be 3-d, got shape {self.maps.shape}")

    @property
    def channels(self) -> int:
        return self.maps.shape[0]


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: np.ndarray
    metric: str = METRIC_ABS_COSINE

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise StructureError(f"similarity matrix must be square, got {e.shape}")


def mean_maps(captured: np.ndarray, layer_index: int = 0) -> ChannelMeanMaps:
    """Average a (S, c, H, W) activation tensor over its sample axis."""
    arr = np.asarray(captured, dtype=np.float64)
    if arr.ndim != 4:
        raise StructureError(f"captured tensor must be 4-d, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise BoundsError("need at least one sample")
    return ChannelMeanMaps(layer_index, arr.mean(axis=0))


def similarity(maps: ChannelMeanMaps) -> SimilarityMatrix:
    """Absolute-cosine similarity between every pair of channel mean maps.

    Each entry is computed once for i < j and mirrored, so the matrix is
    symmetric exactly, not just to roundoff. A zero-norm (dead) channel is
    defined to have similarity 0 with every other channel and 1 with itself.
    """
    c = maps.channels
    if c < 2:
        raise BoundsError(f"similarity needs at least 2 channels, got {c}")
    flat = maps.maps.reshape(c, -1).astype(np.float64)
    norms = np.sqrt((flat * flat).sum(axis=1))
    out = np.eye(c, dtype=np.float64)
    for i in range(c):
        if norms[i] == 0.0:
            continue
        for j in range(i + 1, c):
            if norms[j] == 0.0:
                continue
            cos = float(flat[i] @ flat[j]) / (norms[i] * norms[j])
            val = min(abs(cos), 1.0)
            out[i, j] = val
            out[j, i] = val
    return SimilarityMatrix(out)


def distance_matrix(sim: SimilarityMatrix) -> np.ndarray:
    """Dissimilarity d = 1 - similarity, with an exactly zero diagonal."""
    d = 1.0 - sim.entries
    np.fill_diagonal(d, 0.0)
    return d


def dump_similarity_csv(path, sim: SimilarityMatrix) -> None:
    """Write one layer's similarity matrix as a plain CSV for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        c = sim.entries.shape[0]
        writer.writerow(["channel"] + [str(j) for j in range(c)])
        for i in range(c):
            writer.writerow([str(i)] + [f"{v:.9f}" for v in sim.entries[i]])

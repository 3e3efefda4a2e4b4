"""Exact k-nearest-neighbor distance queries within one sample set and across two.

Two interchangeable backends: `brute` (full pairwise distance matrix) and
`kdtree` (scipy cKDTree). `auto` picks the tree for low dimension and large
workloads. Both backends return identical distances up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .data import SampleSet
from .errors import ConfigError, DataError

BACKENDS = ("brute", "kdtree", "auto")

# auto picks the kd-tree only where it wins: moderate dimension, enough
# distance evaluations to amortize tree construction.
_AUTO_MAX_TREE_DIM = 20
_AUTO_MIN_EVALS = 1e6


@dataclass(frozen=True)
class NeighborConfig:
    """Neighbor index k and backend selection policy."""

    k: int = 5
    backend: str = "auto"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")


def resolve_backend(backend: str, n: int, m: int, d: int) -> str:
    if backend != "auto":
        return backend
    if d <= _AUTO_MAX_TREE_DIM and n * m > _AUTO_MIN_EVALS:
        return "kdtree"
    return "brute"


def build_tree(points: np.ndarray) -> cKDTree:
    return cKDTree(points)


def kth_within(points: np.ndarray, k: int, backend: str = "auto", tree: cKDTree | None = None) -> np.ndarray:
    """Distance from each point to its kth nearest neighbor among the others."""
    n = points.shape[0]
    if n <= k:
        raise DataError(f"within-set query needs at least k+1={k + 1} points, got {n}")
    resolved = resolve_backend(backend, n, n, points.shape[1])
    if resolved == "kdtree" or tree is not None:
        tree = tree if tree is not None else build_tree(points)
        # the (k+1)th smallest including the zero self-distance is the kth
        # smallest among the other points
        dist, _ = tree.query(points, k=[k + 1])
        return dist[:, 0]
    full = cdist(points, points)
    np.fill_diagonal(full, np.inf)
    return np.partition(full, k - 1, axis=1)[:, k - 1]


def kth_cross(query: np.ndarray, target: np.ndarray, k: int, backend: str = "auto",
              tree: cKDTree | None = None) -> np.ndarray:
    """Distance from each query point to its kth nearest neighbor in `target`.

    The query point itself is never excluded: the two sets are treated as
    distinct samples, so identical coordinates are legitimate matches.
    """
    m = target.shape[0]
    if m < k:
        raise DataError(f"cross-set query needs a target with at least k={k} points, got {m}")
    if query.shape[1] != target.shape[1]:
        raise DataError(
            f"dimension mismatch: query d={query.shape[1]}, target d={target.shape[1]}"
        )
    resolved = resolve_backend(backend, query.shape[0], m, target.shape[1])
    if resolved == "kdtree" or tree is not None:
        tree = tree if tree is not None else build_tree(target)
        dist, _ = tree.query(query, k=[k])
        return dist[:, 0]
    full = cdist(query, target)
    return np.partition(full, k - 1, axis=1)[:, k - 1]


def knn_within(sample_set: SampleSet, k: int, backend: str = "auto") -> np.ndarray:
    """kth-NN distances within one sample set (each point excluded from its own candidates)."""
    if k < 1:
        raise ConfigError(f"k must be a positive integer, got {k}")
    return kth_within(sample_set.points, k, backend)


def knn_cross(query: SampleSet, target: SampleSet, k: int, backend: str = "auto") -> np.ndarray:
    """kth-NN distances from each point of `query` into the sample `target`."""
    if k < 1:
        raise ConfigError(f"k must be a positive integer, got {k}")
    return kth_cross(query.points, target.points, k, backend)

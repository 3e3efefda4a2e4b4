"""Gram matrices over sample sets: kernel assembly, symmetrization, and
projection to the nearest symmetric positive semi-definite matrix.

Raw pairwise estimates are generally asymmetric and can be indefinite, so the
learning pipeline always applies symmetrize() and, depending on the mode,
project_psd() before handing a matrix to a solver.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import SampleSet
from .divergence import (
    DistanceKind,
    distance_from_dict,
    distance_to_dict,
    linear_term_matrix,
    squared_distance_matrices,
)
from .errors import ConfigError, DataError, EstimationError
from .neighbors import NeighborConfig


@dataclass(frozen=True)
class Linear:
    """Inner-product kernel int p q = D_{0,1}."""


@dataclass(frozen=True)
class Polynomial:
    """(c + int p q)^s with c >= 0 and integer degree s >= 1."""

    c: float
    s: int

    def __post_init__(self):
        if self.c < 0:
            raise ConfigError(f"polynomial offset c must be >= 0, got {self.c}")
        if self.s < 1:
            raise ConfigError(f"polynomial degree s must be >= 1, got {self.s}")


@dataclass(frozen=True)
class MedianScaled:
    """Sigma resolved as factor * median of the positive off-diagonal squared distances."""

    factor: float = 1.0

    def __post_init__(self):
        if self.factor <= 0:
            raise ConfigError(f"median-scale factor must be positive, got {self.factor}")


@dataclass(frozen=True)
class GaussianOf:
    """exp(-d2 / (2 sigma^2)) over a squared distance d2 of the given kind."""

    distance: DistanceKind
    sigma: float | MedianScaled = MedianScaled(1.0)

    def __post_init__(self):
        if not isinstance(self.sigma, MedianScaled) and self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


KernelSpec = Linear | Polynomial | GaussianOf


@dataclass(frozen=True)
class GramMatrix:
    """A square matrix of pairwise kernel estimates plus processing flags.

    `min_eigenvalue_before` records the smallest eigenvalue seen by the PSD
    projection, as an estimation-noise diagnostic.
    """

    values: np.ndarray
    symmetric: bool = False
    psd_projected: bool = False
    min_eigenvalue_before: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"Gram matrix must be square, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def resolve_sigma(dist2: np.ndarray, sigma: float | MedianScaled) -> float:
    """Resolve a kernel width against a squared-distance matrix."""
    if not isinstance(sigma, MedianScaled):
        return float(sigma)
    off = dist2[~np.eye(dist2.shape[0], dtype=bool)]
    positive = off[off > 0.0]
    if positive.size == 0:
        raise EstimationError("all off-diagonal squared distances are zero; cannot scale sigma")
    return sigma.factor * float(np.median(positive))


def kernel_from_distances(dist2: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel values exp(-d2 / (2 sigma^2)) for a squared-distance matrix."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    return np.exp(-0.5 * dist2 / (sigma * sigma))


def build_gram(sets: list[SampleSet], spec: KernelSpec, div_k: int = 5,
               cfg: NeighborConfig = NeighborConfig(), jobs: int = 1) -> GramMatrix:
    """Raw pairwise kernel estimates for every ordered pair, diagonal included.

    Gaussian diagonals use the estimated self-distance rather than a forced
    exp(0); the PSD projection downstream absorbs the discrepancy.
    """
    if len(sets) < 2:
        raise ConfigError("need at least two sample sets to build a Gram matrix")
    if isinstance(spec, (Linear, Polynomial)):
        inner, _ = linear_term_matrix(sets, div_k, cfg, jobs)
        if isinstance(spec, Linear):
            values = inner
        else:
            values = (spec.c + inner) ** spec.s
    elif isinstance(spec, GaussianOf):
        dists, _ = squared_distance_matrices(sets, [spec.distance], div_k, cfg, jobs)
        dist2 = dists[spec.distance]
        values = kernel_from_distances(dist2, resolve_sigma(dist2, spec.sigma))
    else:
        raise ConfigError(f"unknown kernel spec {spec!r}")
    return GramMatrix(values)


def symmetrize(g: GramMatrix) -> GramMatrix:
    """(G + G^T) / 2; exact fixed point on already-symmetric input."""
    values = (g.values + g.values.T) / 2.0
    return replace(g, values=values, symmetric=True)


def eigh(m: np.ndarray):
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvectors in matching columns.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"matrix must be square, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-12 * scale:
        raise DataError("matrix is not symmetric")
    w, v = np.linalg.eigh(m)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def project_psd(g: GramMatrix) -> GramMatrix:
    """Project onto the nearest symmetric PSD matrix by clipping negative eigenvalues."""
    if not g.symmetric:
        raise DataError("project_psd requires a symmetrized Gram matrix")
    w, v = eigh(g.values)
    min_before = float(w.min())
    clipped = np.maximum(w, 0.0)
    values = (v * clipped) @ v.T
    values = (values + values.T) / 2.0
    return GramMatrix(values, symmetric=True, psd_projected=True,
                      min_eigenvalue_before=min_before)


def submatrix(g: GramMatrix, idx: np.ndarray) -> GramMatrix:
    """Principal submatrix; symmetry and PSD status survive the restriction."""
    values = g.values[np.ix_(idx, idx)]
    return replace(g, values=values)


def kernel_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, Linear):
        return {"kind": "linear"}
    if isinstance(spec, Polynomial):
        return {"kind": "polynomial", "c": spec.c, "s": spec.s}
    if isinstance(spec, GaussianOf):
        sigma = (
            {"median_factor": spec.sigma.factor}
            if isinstance(spec.sigma, MedianScaled)
            else {"value": spec.sigma}
        )
        return {"kind": "gaussian", "distance": distance_to_dict(spec.distance), "sigma": sigma}
    raise ConfigError(f"unknown kernel spec {spec!r}")


def kernel_from_dict(d: dict) -> KernelSpec:
    kind = d.get("kind")
    if kind == "linear":
        return Linear()
    if kind == "polynomial":
        return Polynomial(float(d["c"]), int(d["s"]))
    if kind == "gaussian":
        sigma_d = d["sigma"]
        sigma = (
            MedianScaled(float(sigma_d["median_factor"]))
            if "median_factor" in sigma_d
            else float(sigma_d["value"])
        )
        return GaussianOf(distance_from_dict(d["distance"]), sigma)
    raise ConfigError(f"unknown kernel spec {d!r}")


def save_gram(g: GramMatrix, csv_path: str | Path, meta: dict | None = None) -> Path:
    """Write the matrix as CSV plus a JSON sidecar with spec and diagnostics."""
    csv_path = Path(csv_path)
    lines = [",".join(repr(float(v)) for v in row) for row in g.values]
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "symmetric": g.symmetric,
        "psd_projected": g.psd_projected,
        "min_eigenvalue_before": g.min_eigenvalue_before,
    }
    sidecar.update(meta or {})
    side_path = csv_path.with_suffix(".json")
    side_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return side_path


def load_gram(csv_path: str | Path) -> tuple[GramMatrix, dict]:
    """Read a Gram matrix and its sidecar back."""
    csv_path = Path(csv_path)
    values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    side_path = csv_path.with_suffix(".json")
    meta = json.loads(side_path.read_text()) if side_path.is_file() else {}
    g = GramMatrix(
        values,
        symmetric=bool(meta.get("symmetric", False)),
        psd_projected=bool(meta.get("psd_projected", False)),
        min_eigenvalue_before=meta.get("min_eigenvalue_before"),
    )
    return g, meta

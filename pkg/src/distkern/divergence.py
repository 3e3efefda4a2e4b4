"""k-nearest-neighbor estimation of the functional D_{a,b} = int p^a q^b p dx
and the divergences composed from it.

The estimator for samples X (n points, within-set kth-NN distances rho) and
Y (m points, cross kth-NN distances nu) is

    D_hat = B / (n (n-1)^a m^b) * sum_i rho_i^(-d a) nu_i^(-d b),
    B = cbar_d^(-a-b) * Gamma(k)^2 / (Gamma(k-a) Gamma(k-b)),

with cbar_d the d-dimensional unit-ball volume. Distances raised to a
negative power are floored at DISTANCE_FLOOR so duplicate points cannot
produce infinities; clean continuous data is unaffected.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import SampleSet
from .errors import ConfigError, EstimationError
from .neighbors import NeighborConfig, build_tree, kth_cross, kth_within, resolve_backend

DISTANCE_FLOOR = 1e-12
LOG_FLOOR = 1e-300


class EstimationWarning(UserWarning):
    """Signals clamped distances or a violated consistency condition."""


@dataclass(frozen=True)
class DivergenceSpec:
    """One (alpha, beta) functional with its neighbor index k.

    Consistency of the estimator requires k > 2 max(|alpha|, |beta|) + 1;
    violating that is legal but draws a warning. The Gamma arguments k-alpha
    and k-beta must be strictly positive.
    """

    alpha: float
    beta: float
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if self.k <= self.alpha or self.k <= self.beta:
            raise ConfigError(
                f"k must exceed both alpha and beta (k={self.k}, "
                f"alpha={self.alpha}, beta={self.beta})"
            )
        need = 2.0 * max(abs(self.alpha), abs(self.beta)) + 1.0
        if self.k <= need:
            warnings.warn(
                f"k={self.k} does not satisfy the consistency condition "
                f"k > {need:g} for (alpha={self.alpha}, beta={self.beta})",
                EstimationWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class L2:
    """Squared L2 distance int (p - q)^2."""


@dataclass(frozen=True)
class Hellinger:
    """Squared Hellinger distance 1 - int sqrt(p q)."""


@dataclass(frozen=True)
class RenyiSq:
    """Squared Renyi-alpha divergence (log D_{a-1,1-a} / (a-1))^2."""

    alpha: float

    def __post_init__(self):
        if self.alpha == 1.0:
            raise ConfigError("RenyiSq alpha must differ from 1 (use e.g. 0.99 for a KL proxy)")


KL_SQ = RenyiSq(0.99)  # the alpha -> 1 limit of Renyi approximates KL

DistanceKind = L2 | Hellinger | RenyiSq


def unit_ball_volume(d: int) -> float:
    """Volume of the d-dimensional unit ball, pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def correction_constant(k: int, d: int, alpha: float, beta: float) -> float:
    """The bias-correction constant B_{k,d,alpha,beta}.

    Arranged so that alpha = beta = 0 yields exactly 1.0.
    """
    if k <= alpha or k <= beta:
        raise ConfigError(f"Gamma arguments must be positive: k={k}, alpha={alpha}, beta={beta}")
    gamma_k = math.gamma(k)
    return (
        unit_ball_volume(d) ** (-(alpha + beta))
        * (gamma_k / math.gamma(k - alpha))
        * (gamma_k / math.gamma(k - beta))
    )


def _power_sum(rho: np.ndarray, nu: np.ndarray, d: int, alpha: float, beta: float):
    """sum_i rho_i^(-d alpha) nu_i^(-d beta) with flooring for negative powers."""
    exp_rho = -d * alpha
    exp_nu = -d * beta
    clamped = 0
    if exp_rho < 0:
        clamped += int((rho < DISTANCE_FLOOR).sum())
        rho = np.maximum(rho, DISTANCE_FLOOR)
    if exp_nu < 0:
        clamped += int((nu < DISTANCE_FLOOR).sum())
        nu = np.maximum(nu, DISTANCE_FLOOR)
    return float(np.sum(rho ** exp_rho * nu ** exp_nu)), clamped


def _estimate_from_distances(rho, nu, n, m, d, alpha, beta, k):
    total, clamped = _power_sum(rho, nu, d, alpha, beta)
    denom = n * (n - 1.0) ** alpha * m ** beta
    value = correction_constant(k, d, alpha, beta) * (total / denom)
    return value, clamped


def estimate_D(x: SampleSet, y: SampleSet, spec: DivergenceSpec,
               cfg: NeighborConfig = NeighborConfig()) -> float:
    """Estimate D_{alpha,beta}(p_x || p_y) from the two sample sets."""
    if x.d != y.d:
        raise EstimationError(f"dimension mismatch: {x.d} vs {y.d}")
    k = spec.k
    rho = kth_within(x.points, k, cfg.backend)
    nu = kth_cross(x.points, y.points, k, cfg.backend)
    value, clamped = _estimate_from_distances(rho, nu, x.n, y.n, x.d, spec.alpha, spec.beta, k)
    if clamped:
        warnings.warn(
            f"{clamped} zero-length neighbor distances floored at {DISTANCE_FLOOR:g}",
            EstimationWarning,
            stacklevel=2,
        )
    if not math.isfinite(value):
        raise EstimationError(
            f"non-finite divergence estimate for sets {x.id!r}, {y.id!r} "
            f"(alpha={spec.alpha}, beta={spec.beta})"
        )
    return value


def required_terms(kind: DistanceKind) -> tuple[tuple[float, float], ...]:
    """The (alpha, beta) functionals a distance kind is composed from."""
    if isinstance(kind, L2):
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 2.0))
    if isinstance(kind, Hellinger):
        return ((-0.5, 0.5),)
    if isinstance(kind, RenyiSq):
        return ((kind.alpha - 1.0, 1.0 - kind.alpha),)
    raise ConfigError(f"unknown distance kind {kind!r}")


def distance_from_terms(kind: DistanceKind, terms: dict) -> float:
    """Compose a squared distance from estimated D values; output is >= 0.

    Out-of-range compositions are clamped: Hellinger to [0, 1], L2 to
    [0, inf), and the Renyi argument is floored at LOG_FLOOR before the log.
    """
    if isinstance(kind, L2):
        return max(terms[(1.0, 0.0)] - 2.0 * terms[(0.0, 1.0)] + terms[(-1.0, 2.0)], 0.0)
    if isinstance(kind, Hellinger):
        return min(max(1.0 - terms[(-0.5, 0.5)], 0.0), 1.0)
    if isinstance(kind, RenyiSq):
        d_val = max(terms[(kind.alpha - 1.0, 1.0 - kind.alpha)], LOG_FLOOR)
        if d_val <= 0.0:
            raise EstimationError("Renyi composition received a non-positive estimate")
        return (math.log(d_val) / (kind.alpha - 1.0)) ** 2
    raise ConfigError(f"unknown distance kind {kind!r}")


def squared_distance(x: SampleSet, y: SampleSet, kind: DistanceKind, k: int = 5,
                     cfg: NeighborConfig = NeighborConfig()) -> float:
    """Estimated squared distance of the given kind between two sample sets."""
    terms = {
        (a, b): estimate_D(x, y, DivergenceSpec(a, b, k), cfg)
        for (a, b) in required_terms(kind)
    }
    return distance_from_terms(kind, terms)


# ---------------------------------------------------------------------------
# Batch engine: estimate every ordered pair of a collection at once, reusing
# within-set distances and search trees. Cells are independent, so rows can
# be computed concurrently; results do not depend on the worker count.

def estimate_D_matrix(sets, pairs, k: int, cfg: NeighborConfig = NeighborConfig(),
                      jobs: int = 1):
    """D_hat for every ordered (i, j) including the diagonal.

    `pairs` is a sequence of (alpha, beta) tuples evaluated in one pass over
    the shared neighbor distances. Returns (values, diagnostics) where values
    has shape (T, T, len(pairs)).
    """
    for a, b in pairs:
        DivergenceSpec(a, b, k)  # validates and warns once per call
    T = len(sets)
    if T < 1:
        raise ConfigError("need at least one sample set")
    d = sets[0].d
    points = []
    for s in sets:
        if s.d != d:
            raise EstimationError(f"dimension mismatch: set {s.id!r} has d={s.d}, expected {d}")
        if s.n < k + 1:
            raise EstimationError(f"set {s.id!r} has {s.n} points; need at least k+1={k + 1}")
        points.append(s.points)

    needs_tree = [
        any(resolve_backend(cfg.backend, points[i].shape[0], points[j].shape[0], d) == "kdtree"
            for i in range(T))
        for j in range(T)
    ]
    trees = [build_tree(points[j]) if needs_tree[j] else None for j in range(T)]
    rhos = [kth_within(points[i], k, cfg.backend, tree=trees[i]) for i in range(T)]

    constants = np.array([correction_constant(k, d, a, b) for a, b in pairs])
    ns = np.array([p.shape[0] for p in points], dtype=np.float64)

    def row(i: int):
        out = np.empty((T, len(pairs)))
        clamped = 0
        for j in range(T):
            backend = resolve_backend(cfg.backend, points[i].shape[0], points[j].shape[0], d)
            nu = kth_cross(points[i], points[j], k, backend, tree=trees[j])
            for p_idx, (a, b) in enumerate(pairs):
                total, cl = _power_sum(rhos[i], nu, d, a, b)
                denom = ns[i] * (ns[i] - 1.0) ** a * ns[j] ** b
                out[j, p_idx] = constants[p_idx] * (total / denom)
                clamped += cl
        return out, clamped

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(row, range(T)))
    else:
        results = [row(i) for i in range(T)]

    values = np.stack([r[0] for r in results])
    diagnostics = {"clamped_distances": int(sum(r[1] for r in results))}
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise EstimationError(
            f"non-finite divergence estimate for pair ({bad[0]}, {bad[1]})"
        )
    return values, diagnostics


def squared_distance_matrices(sets, kinds, k: int, cfg: NeighborConfig = NeighborConfig(),
                              jobs: int = 1):
    """Squared-distance matrices for several distance kinds in one pass.

    Returns ({kind: (T, T) matrix}, diagnostics). All kinds share the same
    neighbor distances, so adding kinds is nearly free.
    """
    pair_list = []
    for kind in kinds:
        for t in required_terms(kind):
            if t not in pair_list:
                pair_list.append(t)
    values, diagnostics = estimate_D_matrix(sets, pair_list, k, cfg, jobs)
    index = {t: i for i, t in enumerate(pair_list)}
    T = len(sets)
    out = {}
    for kind in kinds:
        mat = np.empty((T, T))
        for i in range(T):
            for j in range(T):
                terms = {t: values[i, j, index[t]] for t in required_terms(kind)}
                mat[i, j] = distance_from_terms(kind, terms)
        out[kind] = mat
    return out, diagnostics


def linear_term_matrix(sets, k: int, cfg: NeighborConfig = NeighborConfig(), jobs: int = 1):
    """The D_{0,1} (inner-product) matrix used by linear and polynomial kernels."""
    values, diagnostics = estimate_D_matrix(sets, [(0.0, 1.0)], k, cfg, jobs)
    return values[:, :, 0], diagnostics


def distance_to_dict(kind: DistanceKind) -> dict:
    if isinstance(kind, L2):
        return {"kind": "l2"}
    if isinstance(kind, Hellinger):
        return {"kind": "hellinger"}
    if isinstance(kind, RenyiSq):
        return {"kind": "renyi", "alpha": kind.alpha}
    raise ConfigError(f"unknown distance kind {kind!r}")


def distance_from_dict(d: dict) -> DistanceKind:
    kind = d.get("kind")
    if kind == "l2":
        return L2()
    if kind == "hellinger":
        return Hellinger()
    if kind == "renyi":
        return RenyiSq(float(d["alpha"]))
    raise ConfigError(f"unknown distance kind {d!r}")

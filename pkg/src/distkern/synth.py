"""Seeded synthetic sample-set generators and closed-form ground-truth functionals.

Reproducibility contract: all randomness flows through numpy's PCG64 stream
seeded explicitly. Gaussian draws use the Box-Muller transform over PCG64
uniforms (u1 is mapped to (0, 1] as 1 - U so the log stays finite):

    z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)

Beta draws invert the regularized incomplete beta function on a uniform.
Child seeds derive from a base seed by the mixing rule in `child_seed`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset, SampleSet, TEST, TRAIN
from .errors import ConfigError


def child_seed(seed: int, *parts: int) -> int:
    """Deterministic per-unit seed: fold successive indices into the base seed."""
    h = int(seed)
    for p in parts:
        h = h * 1_000_003 + int(p) + 1
    return h & 0x7FFF_FFFF_FFFF_FFFF


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _standard_normals(rng: np.random.Generator, count: int) -> np.ndarray:
    """Box-Muller standard normals; consumes ceil(count/2) uniform pairs."""
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(2.0 * np.pi * u2)
    z[1::2] = radius * np.sin(2.0 * np.pi * u2)
    return z[:count]


def _open_uniforms(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1): exact zeros are redrawn."""
    u = rng.random(count)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return u


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """A matrix L with L L^T = cov, via the symmetric eigendecomposition."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ConfigError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ConfigError("covariance must be symmetric")
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ConfigError(f"covariance is not positive semi-definite (min eigenvalue {w.min()})")
    return v * np.sqrt(np.maximum(w, 0.0))


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotated_cov(base_cov: np.ndarray, angle: float) -> np.ndarray:
    r = rotation_matrix(angle)
    return r @ np.asarray(base_cov, dtype=np.float64) @ r.T


@dataclass(frozen=True)
class Gaussian:
    mean: tuple
    cov: tuple


@dataclass(frozen=True)
class RotatedGaussian:
    base_cov: tuple
    angle: float


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class Uniform:
    lo: tuple
    hi: tuple


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple  # of Gaussian
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.components) != len(w) or len(w) == 0:
            raise ConfigError("mixture needs matching non-empty components and weights")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("mixture weights must be non-negative and sum to 1")


@dataclass(frozen=True)
class GeneratorSpec:
    family: object
    n_points: int
    seed: int
    id: str = ""

    def __post_init__(self):
        if self.n_points < 1:
            raise ConfigError(f"n_points must be positive, got {self.n_points}")


def _sample_gaussian(rng, mean, cov, n):
    mean = np.asarray(mean, dtype=np.float64)
    factor = _psd_factor(cov)
    d = mean.shape[0]
    z = _standard_normals(rng, n * d).reshape(n, d)
    return mean + z @ factor.T


def sample(spec: GeneratorSpec) -> SampleSet:
    """Draw spec.n_points i.i.d. points; deterministic given spec.seed."""
    rng = _rng(spec.seed)
    fam = spec.family
    n = spec.n_points
    if isinstance(fam, Gaussian):
        pts = _sample_gaussian(rng, fam.mean, fam.cov, n)
    elif isinstance(fam, RotatedGaussian):
        cov = rotated_cov(np.asarray(fam.base_cov, dtype=np.float64), fam.angle)
        pts = _sample_gaussian(rng, np.zeros(2), cov, n)
    elif isinstance(fam, Beta):
        u = _open_uniforms(rng, n)
        pts = special.betaincinv(fam.a, fam.b, u).reshape(n, 1)
    elif isinstance(fam, Uniform):
        lo = np.asarray(fam.lo, dtype=np.float64)
        hi = np.asarray(fam.hi, dtype=np.float64)
        if lo.shape != hi.shape or (hi <= lo).any():
            raise ConfigError("uniform bounds must satisfy lo < hi componentwise")
        u = rng.random((n, lo.shape[0]))
        pts = lo + u * (hi - lo)
    elif isinstance(fam, GaussianMixture):
        weights = np.asarray(fam.weights, dtype=np.float64)
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        choice = np.searchsorted(cum, rng.random(n), side="right")
        means = [np.asarray(c.mean, dtype=np.float64) for c in fam.components]
        factors = [_psd_factor(c.cov) for c in fam.components]
        d = means[0].shape[0]
        z = _standard_normals(rng, n * d).reshape(n, d)
        pts = np.empty((n, d))
        for ci in range(len(means)):
            mask = choice == ci
            if mask.any():
                pts[mask] = means[ci] + z[mask] @ factors[ci].T
    else:
        raise ConfigError(f"unknown generator family {type(fam).__name__}")
    return SampleSet(pts, id=spec.id or f"synth-{spec.seed}")


# ---------------------------------------------------------------------------
# Closed-form functionals used as regression targets and estimation oracles.

def beta_skewness(a: float, b: float) -> float:
    """Skewness of Beta(a, b): 2 (b - a) sqrt(a + b + 1) / ((a + b + 2) sqrt(a b))."""
    if a <= 0 or b <= 0:
        raise ConfigError(f"Beta parameters must be positive, got a={a}, b={b}")
    return 2.0 * (b - a) * math.sqrt(a + b + 1.0) / ((a + b + 2.0) * math.sqrt(a * b))


def rotated_gaussian_marginal_entropy(base_cov: np.ndarray, angle: float) -> float:
    """Entropy 0.5 ln(2 pi e M11) of the first marginal of N(0, R S R^T)."""
    m11 = float(rotated_cov(base_cov, angle)[0, 0])
    if m11 <= 0:
        raise ConfigError(f"first marginal variance must be positive, got {m11}")
    return 0.5 * math.log(2.0 * math.pi * math.e * m11)


def gaussian_renyi_divergence(p: tuple, q: tuple, alpha: float) -> float:
    """Closed-form Renyi-alpha divergence between two Gaussians.

    p and q are (mean, cov) pairs. Requires alpha != 1 and the interpolated
    covariance alpha*cov_q + (1-alpha)*cov_p to be positive definite.
    """
    if alpha == 1.0:
        raise ConfigError("alpha=1 is the KL limit; use an alpha close to 1 instead")
    mean_p, cov_p = (np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in p)
    mean_q, cov_q = (np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in q)
    cov_p = np.atleast_2d(cov_p)
    cov_q = np.atleast_2d(cov_q)
    interp = alpha * cov_q + (1.0 - alpha) * cov_p
    sign, logdet_interp = np.linalg.slogdet(interp)
    if sign <= 0:
        raise ConfigError("interpolated covariance is not positive definite")
    diff = mean_p - mean_q
    quad = float(diff @ np.linalg.solve(interp, diff))
    _, logdet_p = np.linalg.slogdet(cov_p)
    _, logdet_q = np.linalg.slogdet(cov_q)
    log_ratio = logdet_interp - ((1.0 - alpha) * logdet_p + alpha * logdet_q)
    return 0.5 * alpha * quad - log_ratio / (2.0 * (alpha - 1.0))


# ---------------------------------------------------------------------------
# Experiment datasets. Each builder is deterministic given its seed and
# produces the manifest-ready Dataset for one preset.

GAUSS_ENTROPY_COV = np.array([[0.29, -0.57], [-0.57, 1.83]])
LLE_COV = np.array([[9.0, 0.0], [0.0, 1.0]])


def beta_skewness_dataset(seed: int, n_sets: int = 350, n_train: int = 300,
                          n_points: int = 500) -> Dataset:
    """Beta(a, 3) sample sets with a ~ U[3, 20]; target is the skewness."""
    if not 0 < n_train < n_sets:
        raise ConfigError("need 0 < n_train < n_sets")
    param_rng = _rng(child_seed(seed, 0))
    a_values = 3.0 + 17.0 * param_rng.random(n_sets)
    sets, labels, partition = [], [], []
    for t in range(n_sets):
        spec = GeneratorSpec(Beta(float(a_values[t]), 3.0), n_points,
                             child_seed(seed, 1, t), id=f"beta-{t:04d}")
        sets.append(sample(spec))
        labels.append(beta_skewness(float(a_values[t]), 3.0))
        partition.append(TRAIN if t < n_train else TEST)
    return Dataset(tuple(sets), np.array(labels), "scalar", tuple(partition))


def gauss_entropy_dataset(seed: int, n_sets: int = 300, n_test: int = 50,
                          n_points: int = 500) -> Dataset:
    """Rotated 2-d Gaussians; target is the entropy of the first marginal.

    Two sets per rotation angle i*pi/(n_sets/2), i = 1..n_sets/2; a seeded
    random subset of n_test sets is held out for testing.
    """
    if n_sets % 2 != 0:
        raise ConfigError("n_sets must be even (two sets per angle)")
    n_angles = n_sets // 2
    sets, labels = [], []
    for t in range(n_sets):
        angle = ((t % n_angles) + 1) * math.pi / n_angles
        spec = GeneratorSpec(RotatedGaussian(tuple(map(tuple, GAUSS_ENTROPY_COV)), angle),
                             n_points, child_seed(seed, 1, t), id=f"rotg-{t:04d}")
        sets.append(sample(spec))
        labels.append(rotated_gaussian_marginal_entropy(GAUSS_ENTROPY_COV, angle))
    test_idx = set(_rng(child_seed(seed, 0)).permutation(n_sets)[:n_test].tolist())
    partition = tuple(TEST if t in test_idx else TRAIN for t in range(n_sets))
    return Dataset(tuple(sets), np.array(labels), "scalar", partition)


def rot_gauss_lle_dataset(seed: int, n_sets: int = 63, n_points: int = 2000) -> Dataset:
    """Rotated Gaussians with cov R S R^T, S = diag(9, 1), angles (i-1)/20 rad."""
    sets = []
    for t in range(n_sets):
        angle = t / 20.0
        spec = GeneratorSpec(RotatedGaussian(tuple(map(tuple, LLE_COV)), angle),
                             n_points, child_seed(seed, 1, t), id=f"lle-{t:04d}")
        sets.append(sample(spec))
    return Dataset(tuple(sets))


def planted_outlier_dataset(seed: int, n_sets: int = 100, n_points: int = 200,
                            outlier_mean: float = 5.0) -> tuple[Dataset, int]:
    """n_sets - 1 sets from N(0, I2) plus one from N(outlier_mean * 1, I2).

    Returns the dataset and the index where the outlier was planted.
    """
    outlier_at = int(_rng(child_seed(seed, 0)).integers(n_sets))
    sets = []
    for t in range(n_sets):
        mean = (outlier_mean, outlier_mean) if t == outlier_at else (0.0, 0.0)
        spec = GeneratorSpec(Gaussian(mean, ((1.0, 0.0), (0.0, 1.0))), n_points,
                             child_seed(seed, 1, t), id=f"grp-{t:04d}")
        sets.append(sample(spec))
    return Dataset(tuple(sets)), outlier_at


def two_class_mixture_dataset(seed: int, sets_per_class: int = 100, n_points: int = 500,
                              separation: float = 1.5, spread: float = 0.75,
                              jitter_deg: float = 15.0) -> Dataset:
    """Two classes of 2-d two-component Gaussian mixtures with a common mean.

    Both classes are zero-mean dumbbells; class 1 is the class-0 shape rotated
    by 90 degrees, and every set gets its own small rotation jitter. Classes
    overlap in mean and scale, so only the shape of the distribution separates
    them.
    """
    param_rng = _rng(child_seed(seed, 0))
    sets, labels = [], []
    for t in range(2 * sets_per_class):
        cls = t % 2
        base = (math.pi / 2.0) * cls
        jitter = math.radians(jitter_deg) * (2.0 * param_rng.random() - 1.0)
        r = rotation_matrix(base + jitter)
        offset = r @ np.array([separation, 0.0])
        cov = tuple(map(tuple, (spread ** 2) * np.eye(2)))
        mix = GaussianMixture(
            (Gaussian(tuple(offset), cov), Gaussian(tuple(-offset), cov)),
            (0.5, 0.5),
        )
        spec = GeneratorSpec(mix, n_points, child_seed(seed, 1, t), id=f"mix-{t:04d}")
        sets.append(sample(spec))
        labels.append(cls)
    return Dataset(tuple(sets), np.array(labels, dtype=np.int64), "class")

"""Kernel machines over precomputed Gram matrices.

All three duals (soft-margin SVM, epsilon-SVR, nu-one-class) reduce to

    minimize 0.5 a' Q a + p' a   s.t.   y' a = const,  lower <= a <= upper

and are solved by one SMO loop with maximal-violating-pair selection. The
matrices here are small (hundreds of sets), so there is no shrinking or
kernel caching.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError, DataError
from .gram import GramMatrix, submatrix

SMO_TOL = 1e-6
SMO_MAX_ITER = 1_000_000
SUPPORT_THRESHOLD = 1e-8

# default tuning grids; C per the usual 2^-9 .. 2^21 ladder, Gaussian width
# factors as powers of two around the distance median
DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-9, 22, 3))
DEFAULT_SIGMA_FACTORS = tuple(2.0 ** e for e in range(-4, 11, 2))


def _solve_smo(Q, p, y, lower, upper, alpha, tol=SMO_TOL, max_iter=SMO_MAX_ITER):
    """Generic SMO; `alpha` must satisfy the equality and box constraints.

    Returns (alpha, iterations). Raises ConvergenceError at the iteration cap.
    """
    alpha = np.array(alpha, dtype=np.float64)
    grad = Q @ alpha + p
    pos = y > 0
    for it in range(max_iter):
        movable_up = np.where(pos, alpha < upper, alpha > lower)
        movable_dn = np.where(pos, alpha > lower, alpha < upper)
        neg_yg = -y * grad
        if not movable_up.any() or not movable_dn.any():
            return alpha, it
        up_vals = np.where(movable_up, neg_yg, -np.inf)
        dn_vals = np.where(movable_dn, neg_yg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(dn_vals))
        gap = up_vals[i] - dn_vals[j]
        if gap <= tol:
            return alpha, it
        # one step along alpha += t * (y_i e_i - y_j e_j), staying in the box
        eta = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        t = gap / max(eta, 1e-12)
        cap_i = (upper[i] - alpha[i]) if y[i] > 0 else (alpha[i] - lower[i])
        cap_j = (alpha[j] - lower[j]) if y[j] > 0 else (upper[j] - alpha[j])
        t = min(t, cap_i, cap_j)
        da_i = y[i] * t
        da_j = -y[j] * t
        alpha[i] = min(max(alpha[i] + da_i, lower[i]), upper[i])
        alpha[j] = min(max(alpha[j] + da_j, lower[j]), upper[j])
        grad += Q[:, i] * da_i + Q[:, j] * da_j
    raise ConvergenceError(
        f"SMO did not reach tolerance {tol:g} within {max_iter} iterations"
    )


def dual_objective(Q, p, alpha) -> float:
    """The minimization objective 0.5 a' Q a + p' a."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(0.5 * alpha @ Q @ alpha + p @ alpha)


def _require_psd(gram: GramMatrix, strict: bool):
    if not isinstance(gram, GramMatrix):
        raise ConfigError("expected a GramMatrix")
    if strict and not gram.psd_projected:
        raise DataError("training requires a PSD-projected Gram matrix in strict mode")


# ---------------------------------------------------------------------------
# Binary soft-margin SVM

@dataclass(frozen=True)
class SvmModel:
    dual_coeffs: np.ndarray  # alpha_i in [0, C]
    labels: np.ndarray       # +-1
    bias: float
    support_indices: np.ndarray
    C: float


def svm_problem(K: np.ndarray, y: np.ndarray, C: float):
    """(Q, p, y, lower, upper, alpha0) for the soft-margin SVM dual."""
    Q = K * np.outer(y, y)
    T = len(y)
    return (Q, -np.ones(T), y.astype(np.float64), np.zeros(T), np.full(T, float(C)),
            np.zeros(T))


def train_binary_svm(gram: GramMatrix, labels: np.ndarray, C: float,
                     strict: bool = True) -> SvmModel:
    """Solve the soft-margin dual on a precomputed Gram block.

    The bias is the average of y_j - sum_i y_i alpha_i G_ij over all points
    with alpha_j above the support threshold.
    """
    _require_psd(gram, strict)
    y = np.asarray(labels, dtype=np.float64)
    K = gram.values
    if len(y) != K.shape[0]:
        raise DataError(f"labels length {len(y)} does not match Gram size {K.shape[0]}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise DataError("both classes must be present to train an SVM")
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")

    alpha, _ = _solve_smo(*svm_problem(K, y, C))
    margins = K @ (alpha * y)
    support = np.flatnonzero(alpha > SUPPORT_THRESHOLD)
    if support.size:
        bias = float(np.mean(y[support] - margins[support]))
    else:
        lo = np.concatenate([(y - margins)[(y > 0) & (alpha <= SUPPORT_THRESHOLD)],
                             (y - margins)[(y < 0) & (alpha >= C - SUPPORT_THRESHOLD)]])
        hi = np.concatenate([(y - margins)[(y < 0) & (alpha <= SUPPORT_THRESHOLD)],
                             (y - margins)[(y > 0) & (alpha >= C - SUPPORT_THRESHOLD)]])
        bias = float((lo.max() + hi.min()) / 2.0) if lo.size and hi.size else 0.0
    return SvmModel(alpha, y, bias, support, float(C))


def predict_binary(model: SvmModel, kernel_row: np.ndarray) -> tuple[int, float]:
    """Predicted label (+1 on ties) and decision value for one test set."""
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != model.dual_coeffs.shape:
        raise DataError(
            f"kernel row length {row.shape} does not match training size "
            f"{model.dual_coeffs.shape}"
        )
    value = float(row @ (model.dual_coeffs * model.labels) + model.bias)
    return (1 if value >= 0.0 else -1), value


# ---------------------------------------------------------------------------
# Pairwise multiclass

@dataclass(frozen=True)
class PairwiseSvm:
    class_a: int
    class_b: int
    indices: np.ndarray  # positions of this pair's members among the training sets
    model: SvmModel


def train_multiclass(gram: GramMatrix, class_labels: np.ndarray, C: float,
                     strict: bool = True) -> list[PairwiseSvm]:
    """One binary model per unordered class pair, r(r-1)/2 in total."""
    labels = np.asarray(class_labels)
    r = int(labels.max()) + 1
    if r < 2:
        raise DataError("multiclass training needs at least two classes")
    for c in range(r):
        if not (labels == c).any():
            raise DataError(f"class {c} has no members")
    models = []
    for a, b in combinations(range(r), 2):
        idx = np.flatnonzero((labels == a) | (labels == b))
        y = np.where(labels[idx] == a, 1.0, -1.0)
        sub = submatrix(gram, idx)
        models.append(PairwiseSvm(a, b, idx, train_binary_svm(sub, y, C, strict)))
    return models


def predict_multiclass(models: list[PairwiseSvm], kernel_rows: np.ndarray):
    """Majority vote over the pairwise models; ties go to the smallest class.

    Accepts one kernel row (length = training size) or a stack of rows.
    """
    rows = np.asarray(kernel_rows, dtype=np.float64)
    single = rows.ndim == 1
    if single:
        rows = rows[None, :]
    r = max(m.class_b for m in models) + 1
    votes = np.zeros((rows.shape[0], r), dtype=np.int64)
    for pw in models:
        for t in range(rows.shape[0]):
            label, _ = predict_binary(pw.model, rows[t, pw.indices])
            votes[t, pw.class_a if label > 0 else pw.class_b] += 1
    winners = votes.argmax(axis=1)
    return int(winners[0]) if single else winners


# ---------------------------------------------------------------------------
# nu one-class SVM

@dataclass(frozen=True)
class OneClassModel:
    dual_coeffs: np.ndarray  # in [0, 1/(nu T)], summing to 1
    bias: float              # the rho offset
    nu: float


def one_class_problem(K: np.ndarray, nu: float):
    """(Q, p, y, lower, upper, alpha0) for the nu-one-class dual."""
    T = K.shape[0]
    upper_bound = 1.0 / (nu * T)
    alpha = np.zeros(T)
    n_full = int(nu * T)
    alpha[:n_full] = upper_bound
    if n_full < T:
        alpha[n_full] = 1.0 - n_full * upper_bound
    return (K, np.zeros(T), np.ones(T), np.zeros(T), np.full(T, upper_bound), alpha)


def train_one_class(gram: GramMatrix, nu: float, strict: bool = True) -> OneClassModel:
    """Minimize 0.5 a' G a subject to 0 <= a_i <= 1/(nu T), sum a = 1.

    The offset is the ceil(nu T)-th smallest training margin, so that point
    scores exactly zero and anything strictly inside the region scores higher.
    """
    _require_psd(gram, strict)
    if not 0.0 < nu <= 1.0:
        raise ConfigError(f"nu must be in (0, 1], got {nu}")
    T = gram.size
    if T < 2:
        raise DataError("one-class training needs at least two sets")
    alpha, _ = _solve_smo(*one_class_problem(gram.values, nu))
    margins = gram.values @ alpha
    quantile = min(max(math.ceil(nu * T - 1e-9), 1), T)
    bias = float(np.sort(margins)[quantile - 1])
    return OneClassModel(alpha, bias, float(nu))


def score_one_class(model: OneClassModel, kernel_row: np.ndarray,
                    self_kernel: float | None = None) -> float:
    """Decision value sum_i alpha_i K_i - rho; negative means anomalous.

    `self_kernel` (the scored set against itself) is accepted for interface
    completeness; the linear decision rule does not use it.
    """
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != model.dual_coeffs.shape:
        raise DataError("kernel row length does not match training size")
    return float(row @ model.dual_coeffs - model.bias)


# ---------------------------------------------------------------------------
# epsilon-SVR

@dataclass(frozen=True)
class SvrModel:
    dual_diff: np.ndarray  # alpha_i - alpha_i^* in [-C, C]
    bias: float
    epsilon: float
    C: float


def svr_problem(K: np.ndarray, targets: np.ndarray, C: float, epsilon: float):
    """(Q, p, y, lower, upper, alpha0) for the epsilon-SVR dual in 2T variables."""
    T = K.shape[0]
    Q = np.block([[K, -K], [-K, K]])
    p = np.concatenate([epsilon - targets, epsilon + targets])
    y = np.concatenate([np.ones(T), -np.ones(T)])
    return (Q, p, y, np.zeros(2 * T), np.full(2 * T, float(C)), np.zeros(2 * T))


def train_svr(gram: GramMatrix, targets: np.ndarray, C: float, epsilon: float,
              strict: bool = True) -> SvrModel:
    """Solve the epsilon-insensitive SVR dual on a precomputed Gram block."""
    _require_psd(gram, strict)
    t_vec = np.asarray(targets, dtype=np.float64)
    K = gram.values
    T = K.shape[0]
    if len(t_vec) != T:
        raise DataError(f"targets length {len(t_vec)} does not match Gram size {T}")
    if not np.isfinite(t_vec).all():
        raise DataError("targets must be finite")
    if C <= 0 or epsilon < 0:
        raise ConfigError(f"need C > 0 and epsilon >= 0, got C={C}, epsilon={epsilon}")

    alpha, _ = _solve_smo(*svr_problem(K, t_vec, C, epsilon))
    a, a_star = alpha[:T], alpha[T:]
    diff = a - a_star
    residual = t_vec - K @ diff
    upper_edge = C - SUPPORT_THRESHOLD * max(1.0, C)
    free_a = (a > SUPPORT_THRESHOLD) & (a < upper_edge)
    free_s = (a_star > SUPPORT_THRESHOLD) & (a_star < upper_edge)
    candidates = np.concatenate([(residual - epsilon)[free_a], (residual + epsilon)[free_s]])
    if candidates.size:
        bias = float(candidates.mean())
    else:
        lowers = np.concatenate([(residual - epsilon)[a <= SUPPORT_THRESHOLD],
                                 (residual + epsilon)[a_star >= upper_edge]])
        uppers = np.concatenate([(residual - epsilon)[a >= upper_edge],
                                 (residual + epsilon)[a_star <= SUPPORT_THRESHOLD]])
        lo = lowers.max() if lowers.size else -np.inf
        hi = uppers.min() if uppers.size else np.inf
        if not np.isfinite(lo) and not np.isfinite(hi):
            bias = 0.0
        elif not np.isfinite(lo):
            bias = float(hi)
        elif not np.isfinite(hi):
            bias = float(lo)
        else:
            bias = float((lo + hi) / 2.0)
    return SvrModel(diff, bias, float(epsilon), float(C))


def predict_svr(model: SvrModel, kernel_row: np.ndarray) -> float:
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != model.dual_diff.shape:
        raise DataError("kernel row length does not match training size")
    return float(row @ model.dual_diff + model.bias)


# ---------------------------------------------------------------------------
# Model serialization

def _ids_hash(training_ids) -> str:
    joined = "\n".join(training_ids)
    return hashlib.sha256(joined.encode()).hexdigest()


def model_to_dict(model, training_ids=()) -> dict:
    """JSON-ready form of any trained model, tagged with a training-set hash."""
    common = {"training_ids_sha256": _ids_hash(tuple(training_ids))}
    if isinstance(model, SvmModel):
        return common | {
            "type": "svm",
            "dual_coeffs": model.dual_coeffs.tolist(),
            "labels": model.labels.tolist(),
            "bias": model.bias,
            "support_indices": model.support_indices.tolist(),
            "C": model.C,
        }
    if isinstance(model, OneClassModel):
        return common | {
            "type": "one_class",
            "dual_coeffs": model.dual_coeffs.tolist(),
            "bias": model.bias,
            "nu": model.nu,
        }
    if isinstance(model, SvrModel):
        return common | {
            "type": "svr",
            "dual_diff": model.dual_diff.tolist(),
            "bias": model.bias,
            "epsilon": model.epsilon,
            "C": model.C,
        }
    raise ConfigError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    kind = d.get("type")
    if kind == "svm":
        return SvmModel(np.array(d["dual_coeffs"]), np.array(d["labels"]), d["bias"],
                        np.array(d["support_indices"], dtype=np.int64), d["C"])
    if kind == "one_class":
        return OneClassModel(np.array(d["dual_coeffs"]), d["bias"], d["nu"])
    if kind == "svr":
        return SvrModel(np.array(d["dual_diff"]), d["bias"], d["epsilon"], d["C"])
    raise ConfigError(f"unknown model type {kind!r}")


def save_model(model, path: str | Path, training_ids=()) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, training_ids), indent=2) + "\n")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))

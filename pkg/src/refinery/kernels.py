"""Per-class kernel ridge classifiers and least-squares box refiners.

The classifier is a Nystrom-approximated Gaussian kernel ridge regression on
+-1 labels, solved by conjugate gradient preconditioned with Cholesky factors
of the center block. The box refiner is a closed-form ridge regression from
region features to center/log-size deltas.

Conventions, fixed here so the dense-solve test oracles agree with the
solver:

* classifier objective:  (1/n) ||K_nm a - y||^2 + lam * a' K_mm a,
  which at M = n coincides with exact KRR, a = (K + lam*n*I)^{-1} y;
* refiner objective:     ||Z w - y||^2 + lam_rls ||w[:-1]||^2
  with Z = [X, 1] (bias column unpenalized).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .boxes import BoxDelta

__all__ = [
    "KernelConfig",
    "ClassifierModel",
    "RefinerModel",
    "gaussian_kernel",
    "median_heuristic_sigma",
    "fit_classifier",
    "predict_raw",
    "calibrate",
    "fit_refiner",
    "predict_deltas",
    "save_classifier",
    "load_classifier",
    "save_refiner",
    "load_refiner",
]


@dataclass(frozen=True)
class KernelConfig:
    """Hyperparameters of the Nystrom kernel ridge classifier.

    sigma=None selects the median heuristic (median pairwise distance of a
    500-row subsample) at fit time; num_centers=None selects min(500, n).
    """

    sigma: float | None = None
    lam: float = 1e-3
    num_centers: int | None = None
    cg_max_iter: int = 200
    cg_tol: float = 1e-7
    center_seed: int = 0

    def __post_init__(self):
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.num_centers is not None and self.num_centers < 1:
            raise ValueError("num_centers must be >= 1")
        if self.cg_tol <= 0:
            raise ValueError("cg_tol must be positive")


@dataclass(frozen=True)
class ClassifierModel:
    class_id: int
    centers: np.ndarray            # (M, d)
    coefficients: np.ndarray       # (M,)
    config: KernelConfig           # with sigma / num_centers resolved
    cg_residuals: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite classifier coefficients")


@dataclass(frozen=True)
class RefinerModel:
    class_id: int
    weights: np.ndarray            # (4, d+1), last column is the bias
    lambda_rls: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite refiner weights")
        if self.lambda_rls <= 0:
            raise ValueError("lambda_rls must be positive")


def gaussian_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-||a_i - b_j||^2 / (2 sigma^2)) for row vectors of a and b."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic_sigma(features: np.ndarray, seed: int = 0, subsample: int = 500) -> float:
    """Median pairwise distance over a seeded subsample; 1.0 if degenerate."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] > subsample:
        rng = np.random.default_rng(seed)
        x = x[rng.choice(x.shape[0], subsample, replace=False)]
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(x * x, axis=1)[None, :]
        - 2.0 * (x @ x.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    d = np.sqrt(sq[np.triu_indices(sq.shape[0], k=1)])
    if d.size == 0:
        return 1.0
    med = float(np.median(d))
    return med if med > 0 else 1.0


def _jittered_cholesky(kmm: np.ndarray, m: int) -> np.ndarray:
    """Upper Cholesky factor of kmm + jitter, escalating jitter as needed.

    The jitter only perturbs the preconditioner, never the solved system.
    """
    eps = float(np.finfo(np.float64).eps) * m
    for _ in range(12):
        try:
            return scipy.linalg.cholesky(kmm + eps * np.eye(m), lower=False)
        except scipy.linalg.LinAlgError:
            eps *= 100.0
    raise np.linalg.LinAlgError("center kernel block is not factorizable")


def _pcg(apply_op, rhs: np.ndarray, tol: float, max_iter: int):
    """Conjugate gradient; stops on relative residual <= tol.

    Returns the solution and the relative-residual history (starting at 1.0).
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    r0 = math.sqrt(rs)
    history = [1.0]
    if r0 == 0.0:
        return x, history
    for _ in range(max_iter):
        if math.sqrt(rs) <= tol * r0:
            break
        op_p = apply_op(p)
        denom = float(p @ op_p)
        if denom <= 0:
            break  # numerically lost positive-definiteness
        step = rs / denom
        x += step * p
        r -= step * op_p
        rs_new = float(r @ r)
        history.append(math.sqrt(rs_new) / r0)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, history


def fit_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    config: KernelConfig,
    class_id: int = 0,
) -> ClassifierModel:
    """Fit one binary Nystrom kernel ridge classifier.

    Rows are canonicalized to lexicographic order before center sampling so
    the fitted model does not depend on the order training rows arrive in.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("features must be a non-empty (n, d) array")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree on n")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    n = x.shape[0]
    if n > 1 and (np.all(y == 1.0) or np.all(y == -1.0)):
        raise ValueError("training set must contain both labels when n > 1")

    order = np.lexsort(x.T[::-1])
    x = x[order]
    y = y[order]

    m = config.num_centers if config.num_centers is not None else min(500, n)
    if m > n:
        raise ValueError(f"num_centers {m} exceeds training-set size {n}")
    sigma = config.sigma if config.sigma is not None else median_heuristic_sigma(
        x, seed=config.center_seed
    )

    rng = np.random.default_rng(config.center_seed)
    centers = x[rng.choice(n, m, replace=False)]
    # Duplicate rows among the selected centers span the same function space
    # but make the center block exactly singular; collapse them.
    centers = np.unique(centers, axis=0)
    m_eff = centers.shape[0]
    resolved = replace(config, sigma=sigma, num_centers=m_eff)

    knm = gaussian_kernel(x, centers, sigma)
    kmm = gaussian_kernel(centers, centers, sigma)

    # Preconditioner from Cholesky factors of the center block: K_mm ~ T'T,
    # then A from the scaled Gram of T plus the ridge term.
    t_fac = _jittered_cholesky(kmm, m_eff)
    a_fac = scipy.linalg.cholesky(
        (t_fac @ t_fac.T) / m_eff + config.lam * np.eye(m_eff), lower=False
    )

    def prec_apply(v):  # T^{-1} A^{-1} v
        return scipy.linalg.solve_triangular(
            t_fac, scipy.linalg.solve_triangular(a_fac, v, lower=False), lower=False
        )

    def prec_apply_t(v):  # A^{-T} T^{-T} v
        return scipy.linalg.solve_triangular(
            a_fac.T,
            scipy.linalg.solve_triangular(t_fac.T, v, lower=True),
            lower=True,
        )

    def apply_op(beta):
        alpha = prec_apply(beta)
        h = knm.T @ (knm @ alpha) / n + config.lam * (kmm @ alpha)
        return prec_apply_t(h)

    rhs = prec_apply_t(knm.T @ y / n)
    beta, history = _pcg(apply_op, rhs, tol=config.cg_tol, max_iter=config.cg_max_iter)
    coeff = prec_apply(beta)
    return ClassifierModel(
        class_id=class_id,
        centers=centers,
        coefficients=coeff,
        config=resolved,
        cg_residuals=tuple(history),
    )


def predict_raw(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    """Raw classifier margins sum_j coeff_j k(x, center_j) for each row."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.centers.shape[1]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match model dim {model.centers.shape[1]}"
        )
    return gaussian_kernel(x, model.centers, model.config.sigma) @ model.coefficients


def calibrate(raw: float) -> float:
    """Logistic squash of a raw margin into [0, 1]."""
    if not math.isfinite(raw):
        raise ValueError("raw score must be finite")
    if raw >= 0:
        return 1.0 / (1.0 + math.exp(-raw))
    e = math.exp(raw)
    return e / (1.0 + e)


def fit_refiner(
    features: np.ndarray,
    deltas: np.ndarray,
    lambda_rls: float = 1e-3,
    class_id: int = 0,
) -> RefinerModel:
    """Ridge-regress box deltas on features, one solve per delta component."""
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(deltas, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("features must be a non-empty (n, d) array")
    if t.shape != (x.shape[0], 4):
        raise ValueError("deltas must be (n, 4)")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(t)):
        raise ValueError("non-finite refiner training data")
    n, d = x.shape
    z = np.hstack([x, np.ones((n, 1))])
    reg = lambda_rls * np.eye(d + 1)
    reg[d, d] = 0.0
    w = np.linalg.solve(z.T @ z + reg, z.T @ t)
    return RefinerModel(class_id=class_id, weights=w.T, lambda_rls=lambda_rls)


def predict_deltas(model: RefinerModel, feature: np.ndarray) -> BoxDelta:
    """Affine map weights @ [feature; 1] as a BoxDelta."""
    f = np.asarray(feature, dtype=np.float64).ravel()
    if f.shape[0] != model.weights.shape[1] - 1:
        raise ValueError(
            f"feature dim {f.shape[0]} does not match refiner dim {model.weights.shape[1] - 1}"
        )
    out = model.weights @ np.append(f, 1.0)
    return BoxDelta(dx=out[0], dy=out[1], dw=out[2], dh=out[3])


def predict_deltas_batch(model: RefinerModel, features: np.ndarray) -> np.ndarray:
    """(k, 4) delta array for a batch of feature rows."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.weights.shape[1] - 1:
        raise ValueError("feature dim does not match refiner dim")
    z = np.hstack([x, np.ones((x.shape[0], 1))])
    return z @ model.weights.T


def save_classifier(model: ClassifierModel, path: str | os.PathLike):
    doc = {
        "class_id": model.class_id,
        "config": {
            "sigma": model.config.sigma,
            "lam": model.config.lam,
            "num_centers": model.config.num_centers,
            "cg_max_iter": model.config.cg_max_iter,
            "cg_tol": model.config.cg_tol,
            "center_seed": model.config.center_seed,
        },
        "centers": model.centers.tolist(),
        "coefficients": model.coefficients.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_classifier(path: str | os.PathLike) -> ClassifierModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return ClassifierModel(
        class_id=int(doc["class_id"]),
        centers=np.array(doc["centers"], dtype=np.float64),
        coefficients=np.array(doc["coefficients"], dtype=np.float64),
        config=KernelConfig(**doc["config"]),
    )


def save_refiner(model: RefinerModel, path: str | os.PathLike):
    doc = {
        "class_id": model.class_id,
        "weights": model.weights.tolist(),
        "lambda_rls": model.lambda_rls,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_refiner(path: str | os.PathLike) -> RefinerModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return RefinerModel(
        class_id=int(doc["class_id"]),
        weights=np.array(doc["weights"], dtype=np.float64),
        lambda_rls=float(doc["lambda_rls"]),
    )

"""
Exact Gaussian-process regression with half-integer Matérn kernels.

Inputs are expected on the unit box (the BO layer normalizes them) and
observations are standardized internally, so the zero prior mean refers to
the standardized scale.  Posterior queries de-standardize on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

JITTER_START = 1e-10
JITTER_MAX = 1e-4

SUPPORTED_NU = (0.5, 1.5, 2.5)


class GpConfigError(ValueError):
    """Invalid kernel hyperparameters."""


class GpNumericalError(ArithmeticError):
    """Covariance factorization failed even after the jitter schedule."""


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 1.0
    nu: float = 2.5
    noise: float = 1e-6

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise GpConfigError(f"lengthscale must be positive, got {self.lengthscale}")
        if not self.noise >= 0:
            raise GpConfigError(f"noise variance must be nonnegative, got {self.noise}")
        if not any(self.nu == v for v in SUPPORTED_NU):
            raise GpConfigError(f"unsupported smoothness nu={self.nu}; use one of {SUPPORTED_NU}")


def matern(d, params: KernelParams):
    """Matérn correlation at distance ``d`` (scalar or array), unit variance.

    Closed forms for nu in {1/2, 3/2, 5/2}:

        nu=1/2:  exp(-r)
        nu=3/2:  (1 + √3 r) exp(-√3 r)
        nu=5/2:  (1 + √5 r + 5 r²/3) exp(-√5 r)

    with r = d / l.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    r = d / params.lengthscale
    if params.nu == 0.5:
        out = np.exp(-r)
    elif params.nu == 1.5:
        s = np.sqrt(3.0) * r
        out = (1.0 + s) * np.exp(-s)
    elif params.nu == 2.5:
        s = np.sqrt(5.0) * r
        out = (1.0 + s + s * s / 3.0) * np.exp(-s)
    else:  # pragma: no cover - KernelParams already validates
        raise GpConfigError(f"unsupported nu={params.nu}")
    return float(out) if out.ndim == 0 else out


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix ``K[i, j] = k(A[i], B[j])``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("kernel_matrix needs nonempty inputs")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    diff = A[:, None, :] - B[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return matern(dist, params)


@dataclass(frozen=True)
class GpModel:
    X: np.ndarray
    y: np.ndarray
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def predict(self, Q):
        """Vectorized posterior over the rows of ``Q``; returns (mean, variance) arrays."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Ks = kernel_matrix(self.X, Q, self.params)
        mean = Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        var = 1.0 + self.params.noise - np.sum(v * v, axis=0)
        var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mean, var * self.y_std**2


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    if y.size == 1 or not std > 0 or not np.isfinite(std):
        std = 1.0
    return (y - mean) / std, mean, std


def fit(X, y, params: KernelParams | None = None) -> GpModel:
    """Condition a zero-mean GP on observations ``y`` at unit-box inputs ``X``.

    If ``K + noise*I`` is not numerically positive definite, jitter is added to
    the diagonal starting at 1e-10 and growing tenfold up to 1e-4.
    """
    params = params or KernelParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if X.shape[0] != y.size:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("X and y must be finite")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("training inputs must lie in the unit box")

    ys, y_mean, y_std = _standardize(y)
    K = kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.noise

    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise GpNumericalError(
                    f"Cholesky of {K.shape[0]}x{K.shape[0]} covariance failed with jitter up to "
                    f"{JITTER_MAX:g}; min pairwise distance "
                    f"{_min_pairwise_distance(X):.3g}, noise {params.noise:g}"
                ) from None

    alpha = cho_solve((L, True), ys, check_finite=False)
    return GpModel(
        X=X.copy(), y=ys, params=params, chol=L, alpha=alpha,
        y_mean=y_mean, y_std=y_std, jitter=jitter,
    )


def _min_pairwise_distance(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return float("inf")
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def posterior(model: GpModel, xi) -> tuple[float, float]:
    """Posterior mean and variance at a single unit-box point."""
    mean, var = model.predict(np.asarray(xi, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def posterior_standardized(model: GpModel, Q) -> tuple[np.ndarray, np.ndarray]:
    """Posterior on the standardized scale, before clamping the variance."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Ks = kernel_matrix(model.X, Q, model.params)
    v = solve_triangular(model.chol, Ks, lower=True, check_finite=False)
    return Ks.T @ model.alpha, 1.0 + model.params.noise - np.sum(v * v, axis=0)

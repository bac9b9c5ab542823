"""Linear discriminant analysis for binary labels.

The solver tag (svd / lsqr / eigen) is kept as configuration for grid
parity, but all three share one numerically robust path: an
eigendecomposition of the (optionally shrunk) pooled covariance with a
floor on small eigenvalues. Shrinkage blends toward a scaled identity:
cov' = (1 - a) * cov + a * (trace(cov) / d) * I, with a = "auto" meaning
the Ledoit-Wolf estimate computed on the class-centered training data.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class LdaParams:
    solver: str = "svd"  # svd | lsqr | eigen (shared implementation)
    shrinkage: Union[None, str, float] = None  # None | "auto" | float in [0,1]

    def to_dict(self):
        return {"solver": self.solver, "shrinkage": self.shrinkage}


def ledoit_wolf_shrinkage(Z: np.ndarray) -> float:
    """Shrinkage intensity for centered data Z (n x d)."""
    n, d = Z.shape
    if n <= 1:
        return 0.0
    Z2 = Z**2
    emp_cov_trace = Z2.sum(axis=0) / n
    mu = emp_cov_trace.sum() / d
    beta_ = float(np.sum(Z2.T @ Z2))
    delta_ = float(np.sum((Z.T @ Z) ** 2)) / n**2
    beta = (beta_ / n - delta_) / (d * n)
    delta = (delta_ - 2.0 * mu * emp_cov_trace.sum() + d * mu**2) / d
    beta = min(beta, delta)
    if delta == 0 or beta <= 0:
        return 0.0
    return float(min(1.0, beta / delta))


@dataclass
class LdaModel:
    params: LdaParams
    seed: int
    mean0: np.ndarray
    mean1: np.ndarray
    weights: np.ndarray
    bias: float
    priors: np.ndarray
    shrinkage_used: float

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        raw = np.clip(self.predict_raw(X), -500, 500)
        return 1.0 / (1.0 + np.exp(-raw))

    def to_dict(self):
        return {
            "mean0": self.mean0.tolist(),
            "mean1": self.mean1.tolist(),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "priors": self.priors.tolist(),
            "shrinkage_used": self.shrinkage_used,
        }

    @classmethod
    def from_dict(cls, params: LdaParams, seed: int, d: dict) -> "LdaModel":
        return cls(
            params,
            seed,
            np.array(d["mean0"]),
            np.array(d["mean1"]),
            np.array(d["weights"]),
            d["bias"],
            np.array(d["priors"]),
            d["shrinkage_used"],
        )


def fit_lda(X: np.ndarray, y: np.ndarray, params: LdaParams, seed: int) -> LdaModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    mask1 = y == 1
    X0, X1 = X[~mask1], X[mask1]
    mean0 = X0.mean(axis=0)
    mean1 = X1.mean(axis=0)
    priors = np.array([X0.shape[0] / n, X1.shape[0] / n])

    Z = np.vstack([X0 - mean0, X1 - mean1])
    cov = (Z.T @ Z) / n

    a = params.shrinkage
    if a == "auto":
        a = ledoit_wolf_shrinkage(Z)
    if a is not None and a > 0:
        cov = (1.0 - a) * cov + a * (np.trace(cov) / d) * np.eye(d)
    shrink_used = float(a) if a is not None else 0.0

    evals, evecs = np.linalg.eigh(cov)
    floor = max(evals.max(), 0.0) * _EIG_FLOOR
    evals = np.maximum(evals, floor if floor > 0 else _EIG_FLOOR)
    diff = mean1 - mean0
    weights = evecs @ ((evecs.T @ diff) / evals)
    bias = float(-0.5 * (mean0 + mean1) @ weights + np.log(priors[1] / priors[0]))
    return LdaModel(params, seed, mean0, mean1, weights, bias, priors, shrink_used)

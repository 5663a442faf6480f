"""Gaussian prior over raw effect parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .effects.layout import LAYOUT_VERSION, NUM_PARAMS

DEFAULT_SHRINKAGE = 1e-3
LOG_2PI = math.log(2 * math.pi)


@dataclass
class PresetDataset:
    """Presets as columns of an ``(M, count)`` matrix."""

    theta: np.ndarray
    layout_version: str = LAYOUT_VERSION
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != NUM_PARAMS:
            raise ValueError(f"expected a ({NUM_PARAMS}, count) matrix, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("presets must be finite")
        if self.layout_version != LAYOUT_VERSION:
            raise ValueError(f"layout_version {self.layout_version!r} does not match {LAYOUT_VERSION!r}")
        self.theta = t

    @classmethod
    def from_rows(cls, rows, **kw) -> "PresetDataset":
        return cls(np.asarray(rows, dtype=np.float64).T, **kw)

    @property
    def count(self) -> int:
        return self.theta.shape[1]

    def __len__(self):
        return self.count

    def __getitem__(self, i) -> np.ndarray:
        return self.theta[:, i]


class GaussianPrior:
    """N(mean, cov) with a cached Cholesky factor ``cov = L L^T``."""

    def __init__(self, mean, cov, shrinkage: float = 0.0):
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        m = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (m, m):
            raise ValueError("mean and covariance shapes do not agree")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("prior must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = scipy.linalg.cholesky(cov, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite; increase shrinkage") from None
        if not np.all(np.diag(chol) > 0):
            raise ValueError("covariance is not positive definite; increase shrinkage")
        self.mean = mean
        self.cov = cov
        self.chol = chol
        self.shrinkage = float(shrinkage)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _check(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=np.float64)
        if t.shape[0] != self.dim:
            raise ValueError(f"expected {self.dim} parameters")
        return t

    def solve(self, v) -> np.ndarray:
        """``cov^-1 v`` through the cached factor."""
        return scipy.linalg.cho_solve((self.chol, True), v)

    def log_density(self, theta) -> float:
        t = self._check(theta)
        w = scipy.linalg.solve_triangular(self.chol, t - self.mean, lower=True)
        return -0.5 * (self.dim * LOG_2PI + self.logdet + float(w @ w))

    def grad_log_density(self, theta) -> np.ndarray:
        t = self._check(theta)
        return -self.solve(t - self.mean)

    def sample(self, seed, n: int = 1) -> np.ndarray:
        """``(M, n)`` draws ``mean + L eps`` from a seeded generator."""
        if n < 1:
            raise ValueError("n must be >= 1")
        eps = np.random.default_rng(seed).standard_normal((self.dim, n))
        return self.mean[:, None] + self.chol @ eps


def fit_gaussian(data: PresetDataset, shrinkage: float = DEFAULT_SHRINKAGE) -> GaussianPrior:
    """Sample mean and unbiased covariance blended toward a scaled identity."""
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    theta = data.theta
    count = theta.shape[1]
    if count < 2:
        raise ValueError("need at least 2 presets")
    # centring on the first preset keeps the mean exact when all presets agree
    mean = theta[:, 0] + (theta - theta[:, :1]).mean(axis=1)
    dev = theta - mean[:, None]
    S = dev @ dev.T / (count - 1)
    m = theta.shape[0]
    scale = np.trace(S) / m
    if scale <= np.finfo(float).eps * max(1.0, float(np.mean(theta**2))):
        scale = 1.0  # presets identical up to round-off: the ridge target falls back to unit scale
    cov = (1.0 - shrinkage) * S + shrinkage * scale * np.eye(m)
    try:
        return GaussianPrior(mean, cov, shrinkage)
    except ValueError:
        raise ValueError("covariance factorisation failed; increase shrinkage") from None


def log_density(prior: GaussianPrior, theta) -> float:
    return prior.log_density(theta)


def grad_log_density(prior: GaussianPrior, theta) -> np.ndarray:
    return prior.grad_log_density(theta)


def sample(prior: GaussianPrior, seed, n: int = 1) -> np.ndarray:
    return prior.sample(seed, n)

"""Adam minimisation with trajectory logging, and a finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class OptimisationError(RuntimeError):
    pass


@dataclass
class OptimRun:
    theta: np.ndarray  # final iterate
    losses: np.ndarray  # loss at the iterate each step started from
    trajectory: np.ndarray  # (kept, M) iterates after the kept steps
    trajectory_steps: np.ndarray
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "losses": [float(v) for v in self.losses],
            "theta": [float(v) for v in self.theta],
        }


def _evaluate(objective, theta):
    out = objective(theta)
    if isinstance(out, tuple):
        return out
    raise TypeError("objective must return (loss, grad)")


def adam_minimize(objective, theta0, steps: int = 1000, lr: float = 0.01, *, beta1: float = BETA1,
                  beta2: float = BETA2, eps: float = EPS, thin: int = 1, seed=None, callback=None) -> OptimRun:
    """Bias-corrected Adam on ``objective(theta) -> (loss, grad)``.

    No early stopping. Iterates after every ``thin``-th step, and always the
    last one, are kept in the trajectory.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not lr > 0:
        raise ValueError("lr must be > 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    theta = np.array(theta0, dtype=np.float64, copy=True)
    if theta.ndim != 1 or not np.all(np.isfinite(theta)):
        raise ValueError("theta0 must be a finite vector")
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses = np.empty(steps)
    kept, kept_steps = [], []
    for t in range(1, steps + 1):
        loss, grad = _evaluate(objective, theta)
        grad = np.asarray(grad, dtype=np.float64)
        if not np.isfinite(loss):
            raise OptimisationError(f"non-finite loss at step {t - 1}")
        if grad.shape != theta.shape or not np.all(np.isfinite(grad)):
            raise OptimisationError(f"non-finite gradient at step {t - 1}")
        losses[t - 1] = loss
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        if t % thin == 0 or t == steps:
            kept.append(theta.copy())
            kept_steps.append(t)
        if callback is not None:
            callback(t, loss, theta)
    config = {"optimizer": "adam", "lr": lr, "steps": steps, "beta1": beta1, "beta2": beta2, "eps": eps, "seed": seed}
    return OptimRun(theta, losses, np.array(kept), np.array(kept_steps), config)


def fd_gradient(objective, theta, h: float = 1e-4) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every i."""
    if not h > 0:
        raise ValueError("h must be > 0")
    x = np.array(theta, dtype=np.float64, copy=True)
    grad = np.empty_like(x)

    def f(p):
        out = objective(p)
        val = float(out[0] if isinstance(out, tuple) else out)
        if not np.isfinite(val):
            raise ValueError("objective is not finite")
        return val

    for i in range(x.shape[0]):
        xi = x[i]
        x[i] = xi + h
        fp = f(x)
        x[i] = xi - h
        fm = f(x)
        x[i] = xi
        grad[i] = (fp - fm) / (2 * h)
    return grad

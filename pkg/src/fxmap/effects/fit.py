"""Oracle preset fitting: match the chain's render to a paired wet track."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .. import dsp
from ..metrics import PAIRS, mldr_torch, mss_torch
from ..optim import adam_minimize
from . import layout
from .chain import EffectsChain, default_chain

CHUNK_SECONDS = 10.0
CHUNK_OVERLAP = 0.5
MAX_BATCH = 35


@dataclass
class FitResult:
    theta: np.ndarray
    losses: np.ndarray
    config: dict = field(default_factory=dict)


def chunk_bounds(n: int, length: int, hop: int) -> list[tuple[int, int]]:
    """Start/stop pairs covering ``[0, n)``; the last chunk is flush with the end."""
    if n <= length:
        return [(0, n)]
    starts = list(range(0, n - length + 1, hop))
    if starts[-1] + length < n:
        starts.append(n - length)
    return [(s, s + length) for s in starts]


def preset_loss(rendered: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """MSS + MLDR over the left/right and mid/side pairs."""
    return sum(mss_torch(rendered, target, p) + mldr_torch(rendered, target, p) for p in PAIRS)


def _as_arrays(dry, wet):
    if isinstance(dry, dsp.AudioBuffer):
        dry.require_rate()
        dry = dry.mono
    if isinstance(wet, dsp.AudioBuffer):
        wet.require_rate()
        wet = wet.samples
    d = np.asarray(dry, dtype=np.float64)
    w = np.asarray(wet, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("dry must be mono")
    if w.ndim != 2 or w.shape[0] != 2:
        raise ValueError("wet must be stereo")
    if d.shape[0] != w.shape[1]:
        raise ValueError(f"length mismatch: dry {d.shape[0]} vs wet {w.shape[1]} samples")
    return d, w


def fit_preset(dry, wet, steps: int = 2000, lr: float = 0.01, *, seed: int = 0, init=None,
               chunk_seconds: float = CHUNK_SECONDS, max_batch: int = MAX_BATCH,
               chain: EffectsChain | None = None, callback=None) -> FitResult:
    """Fit raw parameters so that ``render(dry, theta)`` matches ``wet``.

    The pair is cut into chunks with 50% overlap; chunks whose wet audio has no
    frame above -60 dB are dropped. Each Adam step averages the loss over a
    seeded random batch of at most ``max_batch`` chunks.
    """
    if steps < 1:
        raise ValueError("steps must be ≥ 1")
    d, w = _as_arrays(dry, wet)
    chain = chain or default_chain()
    length = int(round(chunk_seconds * chain.sample_rate))
    bounds = [
        (a, b)
        for a, b in chunk_bounds(d.shape[0], length, int(length * (1 - CHUNK_OVERLAP)))
        if dsp.activity_fraction(w[:, a:b]) > 0
    ]
    if not bounds:
        raise ValueError("all chunks are silent")
    if bounds[0][1] - bounds[0][0] < 2048:
        raise ValueError("input too short")
    dry_chunks = [torch.from_numpy(d[a:b].copy()) for a, b in bounds]
    wet_chunks = [torch.from_numpy(w[:, a:b].copy()) for a, b in bounds]
    rng = np.random.default_rng(seed)

    def objective(theta):
        t = torch.from_numpy(np.asarray(theta, dtype=np.float64)).requires_grad_(True)
        if len(bounds) > max_batch:
            batch = np.sort(rng.choice(len(bounds), size=max_batch, replace=False))
        else:
            batch = np.arange(len(bounds))
        total, grad = 0.0, np.zeros(t.shape[0])
        for i in batch:
            loss = preset_loss(chain.forward(dry_chunks[i], t), wet_chunks[i]) / len(batch)
            (g,) = torch.autograd.grad(loss, t)
            total += float(loss.detach())
            grad += g.numpy()
        return total, grad

    theta0 = layout.neutral() if init is None else np.asarray(init, dtype=np.float64)
    run = adam_minimize(objective, theta0, steps, lr, seed=seed, thin=steps, callback=callback)
    config = dict(run.config, chunk_seconds=chunk_seconds, chunk_overlap=CHUNK_OVERLAP, max_batch=max_batch,
                  chunks=len(bounds))
    return FitResult(run.theta, run.losses, config)

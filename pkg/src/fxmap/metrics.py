"""Evaluation metrics: multi-resolution STFT (MSS), microdynamics (MLDR), PMSE.

The torch versions are differentiable and are reused as the preset-fitting
loss; the numpy entry points wrap them.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from . import dsp
from ._kernels import biquad

MSS_SIZES = (128, 512, 2048)
MSS_OVERLAP = 0.75
MAG_FLOOR = 1e-8
MLDR_SCALES = ((0.010, 0.100), (0.100, 1.000))  # (fast, slow) time constants, s
ENV_FLOOR = 1e-20
PAIRS = ("lr", "ms")


def channel_pair(y: torch.Tensor, pair: str) -> torch.Tensor:
    """``(..., 2, N)`` stereo to the requested channel pair."""
    if pair == "lr":
        return y
    if pair == "ms":
        return torch.stack([y[..., 0, :] + y[..., 1, :], y[..., 0, :] - y[..., 1, :]], dim=-2)
    raise ValueError(f"channel pair must be 'lr' or 'ms', got {pair!r}")


def _stereo_pair(estimate, target):
    def conv(a):
        if isinstance(a, dsp.AudioBuffer):
            a = a.samples
        t = torch.as_tensor(np.asarray(a, dtype=np.float64))
        if t.ndim != 2 or t.shape[0] != 2:
            raise ValueError("expected stereo")
        return t

    e, t = conv(estimate), conv(target)
    if e.shape != t.shape:
        raise ValueError(f"length mismatch: {e.shape[-1]} vs {t.shape[-1]}")
    return e, t


def mss_torch(estimate: torch.Tensor, target: torch.Tensor, pair: str = "lr") -> torch.Tensor:
    """MSS for ``(..., 2, N)`` tensors; one value per leading index."""
    e, t = channel_pair(estimate, pair), channel_pair(target, pair)
    total = 0.0
    for size in MSS_SIZES:
        hop = int(size * (1 - MSS_OVERLAP))
        se = torch.abs(dsp.stft_torch(e, size, hop))
        st = torch.abs(dsp.stft_torch(t, size, hop))
        sc = torch.linalg.vector_norm(st - se, dim=(-2, -1)) / torch.clamp(
            torch.linalg.vector_norm(st, dim=(-2, -1)), min=MAG_FLOOR
        )
        log_mae = torch.mean(
            torch.abs(torch.log(torch.clamp(st, min=MAG_FLOOR)) - torch.log(torch.clamp(se, min=MAG_FLOOR))),
            dim=(-2, -1),
        )
        total = total + sc + log_mae
    return total.mean(dim=-1)


def log_envelope(x: torch.Tensor, tau: float, sample_rate: int = dsp.SAMPLE_RATE) -> torch.Tensor:
    """Log-RMS envelope 0.5 * ln(e + 1e-20) of a one-pole power smoother.

    ``e[n] = e[n-1] + c (x[n]^2 - e[n-1])`` with ``c = 1 - exp(-1 / (tau sr))``
    and ``e[-1] = 0``.
    """
    c = 1.0 - math.exp(-1.0 / (tau * sample_rate))
    coeffs = torch.tensor([c, 0.0, 0.0, c - 1.0, 0.0], dtype=torch.float64)
    env = biquad(x * x, coeffs)
    return 0.5 * torch.log(env + ENV_FLOOR)


def mldr_torch(estimate: torch.Tensor, target: torch.Tensor, pair: str = "lr") -> torch.Tensor:
    e, t = channel_pair(estimate, pair), channel_pair(target, pair)
    total = 0.0
    for fast, slow in MLDR_SCALES:
        mu_e = log_envelope(e, fast) - log_envelope(e, slow)
        mu_t = log_envelope(t, fast) - log_envelope(t, slow)
        total = total + torch.mean(torch.abs(mu_e - mu_t), dim=-1)
    return total.mean(dim=-1)


def mss(estimate, target, channel_pair: str = "lr") -> float:
    """Spectral convergence plus log-magnitude MAE, summed over FFT sizes
    {128, 512, 2048} at 75% overlap and averaged over the two channels."""
    e, t = _stereo_pair(estimate, target)
    with torch.no_grad():
        return float(mss_torch(e, t, channel_pair))


def mldr(estimate, target, channel_pair: str = "lr") -> float:
    """MAE between fast-minus-slow log-RMS envelopes at (10 ms, 100 ms) and
    (100 ms, 1 s), summed over the two scales, averaged over channels."""
    e, t = _stereo_pair(estimate, target)
    with torch.no_grad():
        return float(mldr_torch(e, t, channel_pair))


def pmse(theta_a, theta_b) -> float:
    a = np.asarray(theta_a, dtype=np.float64)
    b = np.asarray(theta_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))

"""Negative log-posterior for style transfer by MAP estimation.

loss(theta) = NLL_mid + NLL_side - alpha * log p(theta)

Each channel NLL is an angular Gaussian over every (reference, estimate) pair,
where estimates are embeddings of the inputs rendered with ``theta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch

from . import dsp
from .effects.chain import EffectsChain, _check_theta, default_chain
from .encoders import NORM_TOL, SILENCE, StereoEmbedding, StyleEmbedding, get_encoder
from .prior import GaussianPrior

CLAMP = 1e-7
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ObjectiveConfig:
    """``sigma`` is ``"adaptive"`` or a pair of fixed variances (mid, side)."""

    alpha: float = 0.0
    encoder: str = "mfcc"
    sigma: object = "adaptive"
    likelihood: bool = True  # False leaves only the prior term

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be finite and >= 0")
        if self.sigma != "adaptive":
            s = tuple(float(v) for v in self.sigma)
            if len(s) != 2 or not all(v > 0 and math.isfinite(v) for v in s):
                raise ValueError("fixed sigma needs two positive variances (mid, side)")
            self.sigma = s

    def variance(self, channel: int):
        return None if self.sigma == "adaptive" else self.sigma[channel]

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "encoder": self.encoder, "sigma": self.sigma, "likelihood": self.likelihood}


@dataclass
class ReferenceSet:
    pairs: list
    encoder_id: str

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("reference set is empty")
        for p in self.pairs:
            for e in (p.mid, p.side):
                if e.encoder_id != self.encoder_id:
                    raise ValueError(f"reference from encoder {e.encoder_id!r}, expected {self.encoder_id!r}")
        if any(p.mid.degenerate for p in self.pairs):
            raise ValueError("mid reference embeddings cannot be degenerate")

    def matrix(self, channel: int):
        """``(embeddings, weights)`` tensors for channel 0 (mid) or 1 (side)."""
        embs = [p[channel] for p in self.pairs]
        z = torch.from_numpy(np.stack([e.values for e in embs]))
        w = torch.tensor([0.0 if e.degenerate else 1.0 for e in embs], dtype=torch.float64)
        return z, w


def _as_vector(z) -> np.ndarray:
    if isinstance(z, StyleEmbedding):
        return z.values
    if isinstance(z, torch.Tensor):
        return z.detach().numpy()
    return np.asarray(z, dtype=np.float64)


def angular_distance(z1, z2) -> float:
    """Geodesic distance between unit vectors, dot product clamped to +-(1 - 1e-7)."""
    a, b = _as_vector(z1), _as_vector(z2)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("embeddings must be vectors of equal length")
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > 1e-3:
            raise ValueError("angular_distance expects unit-norm embeddings")
    return float(np.arccos(np.clip(a @ b, -1 + CLAMP, 1 - CLAMP)))


def pair_angles(refs: torch.Tensor, ests: torch.Tensor) -> torch.Tensor:
    """``(n_ref, n_est)`` angles between rows of two unit-vector matrices."""
    return torch.arccos(torch.clamp(refs @ ests.T, -1 + CLAMP, 1 - CLAMP))


def channel_nll(refs, ref_w, ests, est_w, variance=None):
    """Torch core of :func:`channel_neg_log_likelihood`; ``None`` if no pair has weight."""
    w = ref_w[:, None] * est_w[None, :]
    total = w.sum()
    if total <= 0:
        return None
    phi2 = pair_angles(refs, ests) ** 2
    if variance is None:
        s2 = (w * phi2).sum() / total
        return 0.5 * torch.log(s2) + 0.5 + HALF_LOG_2PI
    return (w * (0.5 * math.log(variance) + HALF_LOG_2PI + phi2 / (2 * variance))).sum() / total


def _stack(embs):
    embs = list(embs)
    if not embs:
        raise ValueError("embedding sets must be non-empty")
    vals, w = [], []
    for e in embs:
        if isinstance(e, StyleEmbedding):
            vals.append(e.values)
            w.append(0.0 if e.degenerate else 1.0)
        else:
            v = _as_vector(e)
            if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
                raise ValueError("embeddings must be unit norm")
            vals.append(v)
            w.append(1.0)
    return torch.from_numpy(np.stack(vals)), torch.tensor(w, dtype=torch.float64)


def channel_neg_log_likelihood(refs, ests, variance=None) -> float:
    """Mean angular-Gaussian NLL over all (ref, est) pairs.

    ``variance=None`` selects the adaptive mode where the variance is the mean
    squared angle, so the value is 0.5*log(mean phi^2) + 0.5 + 0.5*log(2 pi).
    Degenerate (flagged) embeddings get weight zero.
    """
    r, rw = _stack(refs)
    e, ew = _stack(ests)
    if variance is not None and not variance > 0:
        raise ValueError("variance must be positive")
    with torch.no_grad():
        v = channel_nll(r, rw, e, ew, variance)
    if v is None:
        warnings.warn("every pair in this channel is degenerate; it contributes 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(v)


def _inputs(inputs) -> list:
    if isinstance(inputs, (np.ndarray, torch.Tensor, dsp.AudioBuffer)):
        inputs = [inputs]
    out = []
    for x in inputs:
        if isinstance(x, dsp.AudioBuffer):
            x.require_rate()
            x = x.mono
        t = torch.as_tensor(np.asarray(x, dtype=np.float64))
        if t.ndim != 1:
            raise ValueError("inputs must be mono buffers")
        if not torch.all(torch.isfinite(t)):
            raise ValueError("inputs must be finite")
        out.append(t)
    if not out:
        raise ValueError("input set is empty")
    return out


class MAPObjective:
    """Callable ``theta -> (loss, grad)`` for fixed inputs, references and prior."""

    def __init__(self, inputs, refs: ReferenceSet, prior: GaussianPrior | None, cfg: ObjectiveConfig,
                 chain: EffectsChain | None = None):
        if cfg.likelihood:
            self.encoder = get_encoder(cfg.encoder)
            if refs.encoder_id != self.encoder.id:
                raise ValueError(f"references come from {refs.encoder_id!r}, objective uses {self.encoder.id!r}")
            self.ref = [refs.matrix(0), refs.matrix(1)]
        if prior is None and cfg.alpha > 0:
            raise ValueError("alpha > 0 needs a prior")
        if not cfg.likelihood and prior is None:
            raise ValueError("a prior-only objective needs a prior")
        self.inputs = _inputs(inputs)
        self.refs = refs
        self.prior = prior
        self.cfg = cfg
        self.chain = chain or default_chain()

    def embed_renders(self, theta: torch.Tensor):
        """Mid and side embeddings (with weights) of every rendered input."""
        mids, sides, side_w = [], [], []
        for x in self.inputs:
            y = self.chain.forward(x, theta)
            mid, side = y[0] + y[1], y[0] - y[1]
            if float(torch.max(torch.abs(side.detach()))) <= SILENCE:
                z = self.encoder.embed_tensor(mid)
                mids.append(z)
                sides.append(torch.zeros_like(z))
                side_w.append(0.0)
            else:
                z = self.encoder.embed_tensor(torch.stack([mid, side]))
                mids.append(z[0])
                sides.append(z[1])
                side_w.append(1.0)
        ones = torch.ones(len(mids), dtype=torch.float64)
        return [(torch.stack(mids), ones), (torch.stack(sides), torch.tensor(side_w, dtype=torch.float64))]

    def likelihood_term(self, theta: torch.Tensor) -> torch.Tensor:
        est = self.embed_renders(theta)
        total = torch.zeros((), dtype=torch.float64)
        for c in (0, 1):
            v = channel_nll(*self.ref[c], *est[c], self.cfg.variance(c))
            if v is None:
                warnings.warn("side channel fully degenerate; it contributes 0", RuntimeWarning, stacklevel=2)
                continue
            total = total + v
        return total

    def __call__(self, theta) -> tuple[float, np.ndarray]:
        t = _check_theta(theta)
        loss, grad = 0.0, np.zeros(t.shape[0])
        if self.cfg.likelihood:
            tg = t.clone().requires_grad_(True)
            nll = self.likelihood_term(tg)
            if nll.requires_grad:
                (g,) = torch.autograd.grad(nll, tg)
                grad = g.numpy()
            loss = float(nll.detach())
        if self.cfg.alpha > 0 or not self.cfg.likelihood:
            tn = t.numpy()
            loss = loss - self.cfg.alpha * self.prior.log_density(tn)
            grad = grad - self.cfg.alpha * self.prior.grad_log_density(tn)
        return loss, grad

    def loss(self, theta) -> float:
        t = _check_theta(theta)
        value = 0.0
        if self.cfg.likelihood:
            with torch.no_grad():
                value = float(self.likelihood_term(t))
        if self.cfg.alpha > 0 or not self.cfg.likelihood:
            value -= self.cfg.alpha * self.prior.log_density(t.numpy())
        return value


def map_objective(theta, inputs, refs: ReferenceSet, prior: GaussianPrior | None, cfg: ObjectiveConfig,
                  chain: EffectsChain | None = None) -> tuple[float, np.ndarray]:
    return MAPObjective(inputs, refs, prior, cfg, chain)(theta)


def reference_set(stereo_embeddings, encoder_id: str | None = None) -> ReferenceSet:
    pairs = [StereoEmbedding(*p) if not isinstance(p, StereoEmbedding) else p for p in stereo_embeddings]
    if not pairs:
        raise ValueError("reference set is empty")
    return ReferenceSet(pairs, encoder_id or pairs[0].mid.encoder_id)

"""Style encoders: audio -> unit vector on the (D-1)-sphere.

Both built-in encoders are torch graphs, so embeddings of rendered audio are
differentiable with respect to the effect parameters. External encoders are
supported only through precomputed embedding files.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.fft
import torch

from . import dsp
from ._kernels import rfft

FRAME_SIZE = 2048
HOP = 1024
N_MELS = 128
N_MFCC = 25
LOG_FLOOR = 1e-10
STD_FLOOR = 1e-8
SILENCE = 1e-12  # peak level at or below which a buffer counts as all-zero
PEAK_ORDER = 8  # power-mean order standing in for the frame peak
SPREAD_SOFTNESS = 0.1  # dB
NORM_TOL = 1e-6

MIR_FEATURES = ("rms", "crest", "dynamic_spread", "centroid_khz", "flatness", "bandwidth_khz")


@dataclass
class StyleEmbedding:
    values: np.ndarray
    encoder_id: str
    degenerate: bool = False  # zero placeholder for an all-zero side channel

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("embedding must be a finite vector")
        if not self.degenerate and abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise ValueError(f"embedding is not unit norm (norm {np.linalg.norm(v):.9g})")
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[0]


class StereoEmbedding(NamedTuple):
    mid: StyleEmbedding
    side: StyleEmbedding
    side_degenerate: bool


# feature extraction ---------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=None)
def mel_filterbank(n_fft: int = FRAME_SIZE, n_mels: int = N_MELS, sample_rate: int = dsp.SAMPLE_RATE) -> torch.Tensor:
    """HTK-scale triangular filters with unit peak, shape ``(n_mels, n_fft//2+1)``."""
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - lo) / (centre - lo)
    fall = (hi - freqs) / (hi - centre)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    return torch.from_numpy(fb)


@functools.lru_cache(maxsize=None)
def _unit_area_bands() -> torch.Tensor:
    # band powers become mean power densities, so white noise reads flat
    fb = mel_filterbank()
    return fb / fb.sum(dim=1, keepdim=True)


@functools.lru_cache(maxsize=None)
def dct_matrix(n_in: int = N_MELS, n_out: int = N_MFCC) -> torch.Tensor:
    """Orthonormal DCT-II rows 0..n_out-1."""
    return torch.from_numpy(scipy.fft.dct(np.eye(n_in), type=2, norm="ortho", axis=0)[:n_out].copy())


def _check_length(x: torch.Tensor):
    if x.shape[-1] < FRAME_SIZE:
        raise ValueError("input too short")


def mfcc_frames(x: torch.Tensor) -> torch.Tensor:
    """MFCCs per frame, ``(..., 25, frames)``."""
    _check_length(x)
    spec = dsp.stft_torch(x, FRAME_SIZE, HOP)
    power = spec.real**2 + spec.imag**2
    mel = mel_filterbank() @ power
    return dct_matrix() @ torch.log(torch.clamp(mel, min=LOG_FLOOR))


def mir_frames(x: torch.Tensor) -> torch.Tensor:
    """The six MIR descriptors per frame, ``(..., 6, frames)``.

    RMS, crest factor and dynamic spread use the raw frame; the spectral
    descriptors use the Hann-windowed power spectrum. The crest peak is
    the order-8 power mean of the frame and the spread's absolute value is
    rounded off within 0.1 dB of zero; a hard max and abs would make the
    embedding non-differentiable whenever samples shift. Flatness is taken
    over the 128 mel-band powers: the log of a single bin passing near a
    spectral zero is arbitrarily curved, band sums are not.
    """
    _check_length(x)
    raw = dsp.frame(x, FRAME_SIZE, HOP)
    ms = torch.mean(raw * raw, dim=-1)
    rms = torch.sqrt(ms + 1e-20)
    peak = (torch.mean(raw**PEAK_ORDER, dim=-1) + 1e-80) ** (1.0 / PEAK_ORDER)
    crest = peak / rms
    level = 10 * torch.log10(ms + LOG_FLOOR)
    dev = level - level.mean(dim=-1, keepdim=True)
    spread = torch.sqrt(dev * dev + SPREAD_SOFTNESS**2) - SPREAD_SOFTNESS

    spec = rfft(raw * dsp.hann(FRAME_SIZE), FRAME_SIZE)
    power = spec.real**2 + spec.imag**2
    khz = torch.arange(power.shape[-1], dtype=torch.float64) * (dsp.SAMPLE_RATE / FRAME_SIZE / 1000.0)
    total = power.sum(dim=-1) + 1e-20
    centroid = (power * khz).sum(dim=-1) / total
    bandwidth = torch.sqrt((power * (khz - centroid[..., None]) ** 2).sum(dim=-1) / total + 1e-20)
    bands = power @ _unit_area_bands().T
    geo = torch.exp(torch.log(torch.clamp(bands, min=LOG_FLOOR)).mean(dim=-1))
    flatness = geo / torch.clamp(bands.mean(dim=-1), min=LOG_FLOOR)
    return torch.stack([rms, crest, spread, centroid, flatness, bandwidth], dim=-2)


def stats_pool(frames) -> torch.Tensor:
    """``[mean; std; skew; kurt]`` along the last axis of ``(..., d, T)``.

    Population moments, skew = m3/std^3, non-excess kurtosis m4/std^4. A
    feature whose std is below 1e-8 gets skew and kurtosis 0.
    """
    f = torch.as_tensor(frames, dtype=torch.float64)
    if f.ndim < 2:
        raise ValueError("expected a (features, frames) matrix")
    if f.shape[-1] < 2:
        raise ValueError("stats_pool needs at least 2 frames")
    mean = f.mean(dim=-1)
    dev = f - mean[..., None]
    var = (dev * dev).mean(dim=-1)
    ok = var > STD_FLOOR**2
    safe_var = torch.where(ok, var, torch.ones_like(var))
    std = torch.where(ok, torch.sqrt(safe_var), torch.zeros_like(var))
    m3 = (dev**3).mean(dim=-1)
    m4 = (dev**4).mean(dim=-1)
    zero = torch.zeros_like(var)
    skew = torch.where(ok, m3 / safe_var**1.5, zero)
    kurt = torch.where(ok, m4 / safe_var**2, zero)
    return torch.cat([mean, std, skew, kurt], dim=-1)


def normalise(v: torch.Tensor) -> torch.Tensor:
    norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    if torch.any(norm <= 0) or not torch.all(torch.isfinite(norm)):
        raise ValueError("degenerate embedding")
    return v / norm


class Encoder:
    """A differentiable encoder: frame features, stats pooling, L2 norm."""

    def __init__(self, encoder_id: str, features, feature_dim: int):
        self.id = encoder_id
        self.features = features
        self.dim = 4 * feature_dim

    def embed_tensor(self, x: torch.Tensor) -> torch.Tensor:
        """Unit embeddings of ``(..., N)`` audio; gradients flow to ``x``."""
        x = torch.as_tensor(x, dtype=torch.float64)
        if x.shape[-1] >= FRAME_SIZE and torch.any(torch.amax(torch.abs(x.detach()), dim=-1) <= SILENCE):
            raise ValueError("degenerate embedding")
        return normalise(stats_pool(self.features(x)))

    def __call__(self, audio) -> StyleEmbedding:
        x = _mono_tensor(audio)
        with torch.no_grad():
            z = self.embed_tensor(x)
        return StyleEmbedding(z.numpy(), self.id)

    def __repr__(self):
        return f"Encoder({self.id!r}, dim={self.dim})"


ENCODERS = {
    "mfcc": Encoder("mfcc", mfcc_frames, N_MFCC),
    "mir": Encoder("mir", mir_frames, len(MIR_FEATURES)),
}


def get_encoder(encoder_id: str) -> Encoder:
    if encoder_id not in ENCODERS:
        raise ValueError(f"encoder not optimisable: {encoder_id!r} (built-ins: {', '.join(ENCODERS)})")
    return ENCODERS[encoder_id]


def _mono_tensor(audio) -> torch.Tensor:
    if isinstance(audio, dsp.AudioBuffer):
        audio.require_rate()
        audio = audio.mono
    x = torch.as_tensor(np.asarray(audio, dtype=np.float64))
    if x.ndim != 1:
        raise ValueError("expected a mono buffer")
    return x


def mfcc_embed(audio) -> StyleEmbedding:
    return ENCODERS["mfcc"](audio)


def mir_embed(audio) -> StyleEmbedding:
    return ENCODERS["mir"](audio)


def is_silent(x) -> bool:
    return float(np.max(np.abs(np.asarray(x)), initial=0.0)) <= SILENCE


def embed_stereo(audio, encoder: str = "mfcc") -> StereoEmbedding:
    """Embed the mid and side channels of a stereo buffer independently."""
    if isinstance(audio, dsp.AudioBuffer):
        audio.require_rate()
    ms = dsp.mid_side(audio)
    enc = get_encoder(encoder)
    mid = enc(ms.mid)
    if is_silent(ms.side):
        side = StyleEmbedding(np.zeros(enc.dim), enc.id, degenerate=True)
        return StereoEmbedding(mid, side, True)
    return StereoEmbedding(mid, enc(ms.side), False)


# precomputed embeddings -------------------------------------------------------


@dataclass
class EmbeddingBank:
    """Embeddings keyed by id, all from one encoder."""

    encoder_id: str
    entries: dict = field(default_factory=dict)

    def __getitem__(self, key) -> StyleEmbedding:
        return self.entries[key]

    def __contains__(self, key):
        return key in self.entries

    def stereo(self, key: str) -> StereoEmbedding:
        """Look up the ``<key>/mid`` and ``<key>/side`` pair."""
        mid = self.entries[f"{key}/mid"]
        side = self.entries.get(f"{key}/side")
        if side is None:
            return StereoEmbedding(mid, StyleEmbedding(np.zeros(mid.dim), self.encoder_id, True), True)
        return StereoEmbedding(mid, side, False)


def parse_embeddings(records) -> EmbeddingBank:
    if not isinstance(records, list) or not records:
        raise ValueError("embedding file must be a non-empty JSON array")
    bank = None
    for rec in records:
        try:
            key, enc, values = rec["id"], rec["encoder_id"], rec["values"]
        except (KeyError, TypeError):
            raise ValueError("embedding records need id, encoder_id and values") from None
        if bank is None:
            bank = EmbeddingBank(enc)
        elif enc != bank.encoder_id:
            raise ValueError(f"mixed encoders in one file: {bank.encoder_id!r} and {enc!r}")
        if key in bank.entries:
            raise ValueError(f"duplicate embedding id {key!r}")
        emb = StyleEmbedding(np.asarray(values, dtype=np.float64), enc)
        if bank.entries and emb.dim != next(iter(bank.entries.values())).dim:
            raise ValueError(f"embedding {key!r} has a different dimension")
        bank.entries[key] = emb
    return bank


def load_embeddings(path) -> EmbeddingBank:
    with open(path) as fh:
        return parse_embeddings(json.load(fh))


def dump_embeddings(items: dict, encoder_id: str) -> list:
    """Records for ``{id: StyleEmbedding}``; degenerate entries are skipped."""
    return [
        {"id": k, "encoder_id": encoder_id, "values": [float(v) for v in e.values]}
        for k, e in items.items()
        if not e.degenerate
    ]

"""Signal primitives shared by the effects chain, the encoders and the metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ._kernels import rfft

SAMPLE_RATE = 44100
STFT_SIZES = (128, 512, 2048)
STFT_OVERLAPS = (0.5, 0.75)
ACTIVITY_FRAME = 1024


@dataclass
class AudioBuffer:
    """Audio held as a ``(channels, frames)`` float64 matrix."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("audio contains non-finite samples")
        self.samples = s

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def mono(self) -> np.ndarray:
        if self.channels != 1:
            raise ValueError("expected mono")
        return self.samples[0]

    def require_rate(self) -> "AudioBuffer":
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"expected {SAMPLE_RATE} Hz, got {self.sample_rate}")
        return self


@dataclass
class Spectrogram:
    bins: np.ndarray  # complex, (freq_bins, time_frames)
    fft_size: int
    hop: int
    window: str = "hann"


@dataclass
class MidSidePair:
    mid: np.ndarray
    side: np.ndarray

    def to_stereo(self) -> np.ndarray:
        return np.stack([(self.mid + self.side) / 2, (self.mid - self.side) / 2])


def db_to_amp(db):
    return 10.0 ** (np.asarray(db) / 20.0)


def amp_to_db(amp, floor: float = 1e-10):
    return 20.0 * np.log10(np.maximum(np.abs(amp), floor))


def num_frames(length: int, fft_size: int, hop: int) -> int:
    if length < fft_size:
        raise ValueError("input too short")
    return -(-(length - fft_size) // hop) + 1


def frame(x: torch.Tensor, fft_size: int, hop: int) -> torch.Tensor:
    """Slice ``(..., N)`` into ``(..., frames, fft_size)`` without centring.

    A trailing partial frame is completed with zeros.
    """
    n = x.shape[-1]
    count = num_frames(n, fft_size, hop)
    total = (count - 1) * hop + fft_size
    if total > n:
        x = torch.nn.functional.pad(x, (0, total - n))
    if fft_size % hop:
        return x.unfold(-1, fft_size, hop)
    # hop divides the frame: stitch frames from hop-sized blocks, which is
    # much cheaper to differentiate than unfold
    r = fft_size // hop
    blocks = x[..., : (count + r - 1) * hop].reshape(*x.shape[:-1], count + r - 1, hop)
    return torch.cat([blocks[..., i : i + count, :] for i in range(r)], dim=-1)


_windows: dict[int, torch.Tensor] = {}


def hann(size: int) -> torch.Tensor:
    if size not in _windows:
        _windows[size] = torch.hann_window(size, periodic=True, dtype=torch.float64)
    return _windows[size]


def stft_torch(x: torch.Tensor, fft_size: int, hop: int) -> torch.Tensor:
    """Hann-windowed one-sided STFT, returned as ``(..., bins, frames)``."""
    frames = frame(x, fft_size, hop) * hann(fft_size)
    return rfft(frames, fft_size).transpose(-1, -2)


def stft(audio, fft_size: int, overlap: float) -> Spectrogram:
    if fft_size not in STFT_SIZES:
        raise ValueError(f"fft_size must be one of {STFT_SIZES}")
    if overlap not in STFT_OVERLAPS:
        raise ValueError(f"overlap must be one of {STFT_OVERLAPS}")
    x = np.asarray(audio, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a mono buffer")
    hop = int(round(fft_size * (1 - overlap)))
    bins = stft_torch(torch.from_numpy(x), fft_size, hop).numpy()
    return Spectrogram(bins=bins, fft_size=fft_size, hop=hop)


def mid_side(stereo) -> MidSidePair:
    s = stereo.samples if isinstance(stereo, AudioBuffer) else np.asarray(stereo, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != 2:
        raise ValueError("expected stereo")
    return MidSidePair(mid=s[0] + s[1], side=s[0] - s[1])


def activity_fraction(audio, threshold_db: float = -60.0) -> float:
    """Fraction of 1024-sample frames whose RMS level exceeds ``threshold_db``.

    Stereo input is measured on the mean power across channels. A trailing
    partial frame is measured over the samples it has.
    """
    if not np.isfinite(threshold_db):
        raise ValueError("threshold_db must be finite")
    s = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    n = s.shape[-1]
    if n == 0:
        raise ValueError("empty buffer")
    power = np.mean(s**2, axis=0)
    starts = np.arange(0, n, ACTIVITY_FRAME)
    ms = np.add.reduceat(power, starts) / np.diff(np.append(starts, n))
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(ms)
    return float(np.mean(level > threshold_db))

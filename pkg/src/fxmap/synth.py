"""Synthetic vocal-like test material (no recordings ship with the package)."""

from __future__ import annotations

import numpy as np
import scipy.signal

from .dsp import SAMPLE_RATE

_FORMANTS = ((700.0, 1220.0, 2600.0), (300.0, 870.0, 2240.0), (500.0, 1500.0, 2500.0), (400.0, 2000.0, 2550.0))


def vocal_like(seconds: float, seed, level: float = 0.1) -> np.ndarray:
    """Glottal pulse train with vibrato, through vowel formants, gated into syllables."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(110.0, 260.0) * (1 + 0.02 * np.sin(2 * np.pi * rng.uniform(4.5, 6.0) * t))
    phase = np.cumsum(f0) / SAMPLE_RATE
    src = (phase % 1.0) - 0.5
    src = np.diff(src, prepend=src[0]) + 0.02 * rng.standard_normal(n)
    out = np.zeros(n)
    syl = int(rng.uniform(0.18, 0.3) * SAMPLE_RATE)
    for start in range(0, n, syl):
        seg = slice(start, min(n, start + syl))
        vowel = _FORMANTS[rng.integers(len(_FORMANTS))]
        y = np.zeros(seg.stop - seg.start)
        for k, f in enumerate(vowel):
            b, a = scipy.signal.iirpeak(f, 8.0, SAMPLE_RATE)
            y += scipy.signal.lfilter(b, a, src[seg]) * 0.5**k
        env = np.sin(np.pi * np.linspace(0, 1, len(y))) ** 0.5 * rng.uniform(0.3, 1.0)
        out[seg] = y * env
    return level * out / max(np.max(np.abs(out)), 1e-12)

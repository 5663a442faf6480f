import math

import numpy as np
import pytest

from fxmap import metrics
from fxmap.effects import layout, render


def stereo(rng, n=22050):
    return 0.1 * rng.standard_normal((2, n))


def test_identity_is_zero(rng):
    x = stereo(rng)
    for pair in ("lr", "ms"):
        assert metrics.mss(x, x, pair) == 0.0
        assert metrics.mldr(x, x, pair) == 0.0


def test_mss_double_target(rng):
    x = stereo(rng)
    # three resolutions, each SC = 1 and log-MAE = log 2
    assert metrics.mss(2 * x, x) == pytest.approx(3 * (1 + math.log(2)), rel=1e-9)


def test_mldr_scale_invariant(rng):
    x = stereo(rng)
    assert metrics.mldr(0.5 * x, x) < 1e-9 and metrics.mldr(0.5 * x, x, "ms") < 1e-9


def test_mldr_sees_compression(rng):
    t = np.arange(44100) / 44100
    x = 0.3 * rng.standard_normal(44100) * (0.05 + np.abs(np.sin(2 * np.pi * 2 * t)))
    plain = render(x, layout.neutral())
    squashed = layout.with_physical(layout.neutral(), drc__ratio=8.0, drc__threshold=-40.0, drc__attack=1.0)
    assert metrics.mldr(render(x, squashed), plain) > 0.05


def test_nonnegative(rng):
    a, b = stereo(rng), stereo(rng)
    assert metrics.mss(a, b) > 0 and metrics.mldr(a, b) > 0


def test_length_mismatch(rng):
    with pytest.raises(ValueError, match="length mismatch"):
        metrics.mss(stereo(rng, 4096), stereo(rng, 4097))
    with pytest.raises(ValueError, match="length mismatch"):
        metrics.mldr(stereo(rng, 4096), stereo(rng, 4097))


def test_pmse(rng):
    a = rng.standard_normal(130)
    assert metrics.pmse(a, a) == 0.0
    b = a.copy()
    b[7] += 1
    assert metrics.pmse(a, b) == pytest.approx(1 / 130, abs=1e-15)
    c = rng.standard_normal(130)
    assert metrics.pmse(a, c) == pytest.approx(sum((x - y) ** 2 for x, y in zip(a, c)) / 130, abs=1e-12)
    with pytest.raises(ValueError):
        metrics.pmse(a, c[:-1])

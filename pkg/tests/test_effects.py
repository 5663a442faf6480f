import numpy as np
import pytest
import torch

from fxmap.effects import fit_preset, layout, render
from fxmap.effects.chain import EffectsChain, fft_length, map_params


def test_layout_size_and_version():
    assert len(layout.FIELDS) == 130 == layout.NUM_PARAMS
    assert layout.LAYOUT_VERSION == "fxmap-layout-1"
    assert "| 0 |" in layout.describe()


def test_to_raw_inverts_to_physical(rng):
    th = layout.neutral() + 0.5 * rng.standard_normal(130)
    phys = layout.to_physical(torch.from_numpy(th)).numpy()
    np.testing.assert_allclose(layout.to_raw(phys), th, atol=1e-7)


def test_neutral_is_centre_panned_pass_through(noise):
    x = noise(0.5)
    y = render(x, layout.neutral())
    assert np.max(np.abs(y - x / np.sqrt(2))) <= 1e-6


def test_hard_left(noise):
    th = layout.neutral()
    th[layout.INDEX["pan.position"]] = -20.0
    y = render(noise(0.5), th)
    assert np.max(np.abs(y[1])) <= 1e-9


def test_delay_echo_spacing():
    th = layout.with_physical(layout.neutral(), delay__time=100.0, delay__feedback=0.5, delay__cross=1e-6,
                              send__delay=0.5, delay__damping=19999.0)
    imp = np.zeros(44100)
    imp[0] = 1.0
    y = render(imp, th)
    d = map_params(th).delay["time"] * 44.1
    peaks = np.sort(np.argsort(-np.abs(y[0, 1:]))[:3] + 1)
    np.testing.assert_allclose(peaks, d * np.arange(1, 4), atol=1.0)


def test_render_shape_and_finiteness(noise, rng):
    th = layout.neutral() + 0.5 * rng.standard_normal(130)
    y = render(noise(0.3), th)
    assert y.shape == (2, int(0.3 * 44100)) and np.all(np.isfinite(y))


def test_bad_theta():
    with pytest.raises(ValueError):
        render(np.zeros(4096), np.zeros(129))
    th = layout.neutral()
    th[3] = np.nan
    with pytest.raises(ValueError):
        render(np.zeros(4096), th)


def test_fft_length():
    for m in (1, 7, 1000, 44099, 882001):
        n = fft_length(m)
        assert n >= m
        k = n
        for p in (2, 3):
            while k % p == 0:
                k //= p
        assert k == 1


def test_batched_forward_matches_single(noise, rng):
    ch = EffectsChain()
    th = torch.from_numpy(layout.neutral() + 0.3 * rng.standard_normal(130))
    xs = torch.from_numpy(np.stack([noise(0.2), noise(0.2)]))
    with torch.no_grad():
        both = ch.forward(xs, th)
        one = ch.forward(xs[1], th)
    assert torch.allclose(both[1], one, atol=1e-12)


def test_fit_preset_reduces_loss(noise, rng):
    x = noise(0.5)
    wet = render(x, layout.neutral() + 0.3 * rng.standard_normal(130))
    res = fit_preset(x, wet, steps=15, lr=0.05, seed=0)
    assert res.losses.shape == (15,) and res.losses[-1] < res.losses[0]


def test_fit_preset_errors(noise):
    x = noise(0.5)
    with pytest.raises(ValueError, match="steps"):
        fit_preset(x, np.zeros((2, x.size)), steps=0)
    with pytest.raises(ValueError, match="length mismatch"):
        fit_preset(x, np.zeros((2, x.size + 1)), steps=1)
    with pytest.raises(ValueError, match="silent"):
        fit_preset(x, np.zeros((2, x.size)), steps=1)


def test_zero_in_zero_out(rng):
    th = layout.neutral() + 0.5 * rng.standard_normal(130)
    assert np.array_equal(render(np.zeros(8192), th), np.zeros((2, 8192)))


def test_mapped_fields_stay_in_range(rng):
    raw = torch.from_numpy(3.0 * rng.standard_normal((1000, 130)))
    phys = layout.to_physical(raw).numpy()
    for i, f in enumerate(layout.FIELDS):
        col = phys[:, i]
        if f.kind in ("lin", "log"):
            assert np.all((col >= f.lo) & (col <= f.hi)), f.name
        elif f.kind == "sym":
            assert np.all(np.abs(col) <= f.hi), f.name
        elif f.kind == "exp":
            assert np.all(col > f.lo), f.name


def test_neutral_physical_values():
    p = map_params(layout.neutral())
    assert np.all(p.peq[:, 1] == 0.0)
    assert p.drc["ratio"] == pytest.approx(1.0, abs=1e-8)
    assert p.sends["delay"] == 0.0 and p.sends["reverb"] == 0.0 and p.pan == 0.0


def test_output_bounded(rng, noise):
    x = noise(0.5)
    for _ in range(5):
        y = render(x, layout.neutral() + rng.standard_normal(130))
        assert np.max(np.abs(y)) <= 100 * np.max(np.abs(x))

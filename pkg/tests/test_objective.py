import math

import numpy as np
import pytest

from fxmap import objective as O
from fxmap.effects import layout, render
from fxmap.encoders import StyleEmbedding, embed_stereo
from fxmap.prior import PresetDataset, fit_gaussian


def unit(rng, d=8):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_angular_distance():
    e = np.eye(4)
    assert abs(O.angular_distance(e[0], e[1]) - math.pi / 2) <= 1e-9
    assert O.angular_distance(e[0], e[0]) == pytest.approx(math.acos(1 - 1e-7))
    with pytest.raises(ValueError):
        O.angular_distance(2 * e[0], e[1])


def test_adaptive_nll_closed_form(rng):
    refs = [unit(rng) for _ in range(3)]
    ests = [unit(rng) for _ in range(2)]
    phi2 = [math.acos(float(np.clip(r @ e, -1 + 1e-7, 1 - 1e-7))) ** 2 for r in refs for e in ests]
    expected = 0.5 * math.log(np.mean(phi2)) + 0.5 + 0.5 * math.log(2 * math.pi)
    assert O.channel_neg_log_likelihood(refs, ests) == pytest.approx(expected, rel=1e-12)


def test_fixed_nll(rng):
    refs, ests = [unit(rng)], [unit(rng)]
    phi = math.acos(float(refs[0] @ ests[0]))
    v = 0.3
    expected = 0.5 * math.log(v) + 0.5 * math.log(2 * math.pi) + phi**2 / (2 * v)
    assert O.channel_neg_log_likelihood(refs, ests, v) == pytest.approx(expected, rel=1e-12)


def test_degenerate_channel_contributes_zero(rng):
    deg = StyleEmbedding(np.zeros(8), "mfcc", degenerate=True)
    with pytest.warns(RuntimeWarning):
        assert O.channel_neg_log_likelihood([deg], [unit(rng)]) == 0.0


def test_prior_only_objective_equals_negative_log_density(rng, noise):
    pr = fit_gaussian(PresetDataset(layout.neutral()[:, None] + 0.3 * rng.standard_normal((130, 30))))
    x = noise(0.2)
    refs = O.reference_set([embed_stereo(render(x, pr.mean))])
    obj = O.MAPObjective([x], refs, pr, O.ObjectiveConfig(alpha=1.0, likelihood=False))
    th = pr.mean + 0.1 * rng.standard_normal(130)
    loss, grad = obj(th)
    assert loss == pytest.approx(-pr.log_density(th), rel=1e-12)
    np.testing.assert_allclose(grad, -pr.grad_log_density(th), rtol=1e-12)


def test_gradient_on_a_few_coordinates(rng, noise):
    pr = fit_gaussian(PresetDataset(layout.neutral()[:, None] + 0.3 * rng.standard_normal((130, 30))))
    refs = O.reference_set([embed_stereo(render(noise(0.25), pr.sample(1)[:, 0]))])
    obj = O.MAPObjective([noise(0.25)], refs, pr, O.ObjectiveConfig(alpha=0.1))
    th = pr.sample(2)[:, 0]
    _, g = obj(th)
    idx = [0, 20, 60, 77, 129]
    for i in idx:
        e = np.zeros(130)
        e[i] = 1e-4
        fd = (obj.loss(th + e) - obj.loss(th - e)) / 2e-4
        assert fd == pytest.approx(g[i], rel=1e-3, abs=1e-8)


def test_config_validation():
    with pytest.raises(ValueError):
        O.ObjectiveConfig(alpha=-1)
    with pytest.raises(ValueError):
        O.ObjectiveConfig(sigma=(1.0, -1.0))
    assert O.ObjectiveConfig(sigma=[0.1, 0.2]).variance(1) == 0.2


def test_alpha_needs_prior(noise):
    x = noise(0.2)
    refs = O.reference_set([embed_stereo(render(x, layout.neutral()))])
    with pytest.raises(ValueError, match="prior"):
        O.MAPObjective([x], refs, None, O.ObjectiveConfig(alpha=0.1))


def test_encoder_mismatch(noise):
    x = noise(0.2)
    refs = O.reference_set([embed_stereo(render(x, layout.neutral()), "mir")])
    with pytest.raises(ValueError):
        O.MAPObjective([x], refs, None, O.ObjectiveConfig(encoder="mfcc"))

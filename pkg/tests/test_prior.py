import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxmap import prior as P
from fxmap.effects import layout


def dataset(rng, count=40, spread=0.3):
    return P.PresetDataset(layout.neutral()[:, None] + spread * rng.standard_normal((130, count)))


def dense_log_density(mean, cov, theta):
    sign, logdet = np.linalg.slogdet(cov)
    d = theta - mean
    return -0.5 * (len(mean) * np.log(2 * np.pi) + logdet + d @ np.linalg.inv(cov) @ d)


def test_fit_matches_definition(rng):
    data = dataset(rng)
    pr = P.fit_gaussian(data, 0.1)
    S = np.cov(data.theta, ddof=1)
    target = 0.9 * S + 0.1 * np.trace(S) / 130 * np.eye(130)
    np.testing.assert_allclose(pr.mean, data.theta.mean(axis=1), atol=1e-14)
    np.testing.assert_allclose(pr.cov, target, atol=1e-13)


def test_log_density_vs_dense(rng):
    pr = P.fit_gaussian(dataset(rng), 0.01)
    for _ in range(5):
        th = pr.sample(rng.integers(1 << 31))[:, 0]
        assert pr.log_density(th) == pytest.approx(dense_log_density(pr.mean, pr.cov, th), rel=1e-8)


def test_gradient_zero_at_mean(rng):
    pr = P.fit_gaussian(dataset(rng))
    assert np.max(np.abs(pr.grad_log_density(pr.mean))) <= 1e-10


def test_gradient_vs_finite_difference(rng):
    pr = P.fit_gaussian(dataset(rng), 0.2)
    th = pr.mean + 0.1 * rng.standard_normal(130)
    g = pr.grad_log_density(th)
    for i in rng.choice(130, 8, replace=False):
        e = np.zeros(130)
        e[i] = 1e-5
        fd = (pr.log_density(th + e) - pr.log_density(th - e)) / 2e-5
        assert fd == pytest.approx(g[i], rel=1e-5, abs=1e-6)


def test_identical_presets_fall_back_to_unit_scale():
    data = P.PresetDataset(np.tile(layout.neutral()[:, None], (1, 5)))
    pr = P.fit_gaussian(data, 1e-3)
    np.testing.assert_array_equal(pr.mean, layout.neutral())
    np.testing.assert_allclose(pr.cov, 1e-3 * np.eye(130), atol=1e-18)


def test_zero_shrinkage_rank_deficient_fails(rng):
    with pytest.raises(ValueError, match="increase shrinkage"):
        P.fit_gaussian(dataset(rng, count=10), 0.0)


def test_too_few_presets(rng):
    with pytest.raises(ValueError, match="at least 2"):
        P.fit_gaussian(dataset(rng, count=1))


def test_sampling_is_seeded(rng):
    pr = P.fit_gaussian(dataset(rng))
    np.testing.assert_array_equal(pr.sample(5, 3), pr.sample(5, 3))
    draws = pr.sample(0, 4000)
    assert np.max(np.abs(draws.mean(axis=1) - pr.mean)) < 5 * np.sqrt(np.max(np.diag(pr.cov)) / 4000)


def test_mean_is_the_mode(rng):
    pr = P.fit_gaussian(dataset(rng))
    best = pr.log_density(pr.mean)
    probes = pr.mean[:, None] + 0.01 * rng.standard_normal((130, 200))
    assert all(pr.log_density(probes[:, k]) < best for k in range(200))


def test_asymmetric_covariance_rejected():
    cov = np.eye(3)
    cov[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetric"):
        P.GaussianPrior(np.zeros(3), cov)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-4, 1.0))
def test_log_density_property(seed, shrinkage):
    rng = np.random.default_rng(seed)
    pr = P.fit_gaussian(dataset(rng, count=int(rng.integers(2, 60)), spread=float(rng.uniform(0.01, 2))), shrinkage)
    th = pr.mean + rng.standard_normal(130)
    assert pr.log_density(th) == pytest.approx(dense_log_density(pr.mean, pr.cov, th), rel=1e-8)
    assert pr.log_density(th) <= pr.log_density(pr.mean)

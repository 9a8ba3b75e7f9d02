import io

import numpy as np
import pytest

from plcopula.errors import ConfigError, DataError
from plcopula.polya_tree import (
    GaussianBase, LaplaceBase, PolyaTreeSpec, polya_tree_from_text,
    polya_tree_to_text, pt_mean_cdf, pt_mean_density, pt_mean_inverse_cdf,
    pt_merge, pt_sample_inverse_cdf, pt_sample_marginal, pt_update,
)


def _spec(depth=8, base=None, alpha_scale=1.0):
    return PolyaTreeSpec(base=base or GaussianBase(0.0, 1.0), depth=depth,
                         alpha_scale=alpha_scale)


def test_prior_mean_density_equals_base():
    post = pt_update(_spec(), np.empty(0))
    ys = np.linspace(-4, 4, 41)
    np.testing.assert_allclose(pt_mean_density(post, ys),
                               GaussianBase(0.0, 1.0).pdf(ys), rtol=1e-12)
    np.testing.assert_allclose(pt_mean_cdf(post, ys),
                               GaussianBase(0.0, 1.0).cdf(ys), atol=1e-12)


def test_single_observation_routes_down_one_side_of_the_median():
    spec = _spec(depth=6)
    eps = 1e-6
    left = pt_update(spec, np.array([0.0 - eps]))
    right = pt_update(spec, np.array([0.0 + eps]))
    for m in range(1, 7):
        # all mass on the all-left (resp. all-right-of-median...) path
        assert left.count(m, (np.int64(1) << m) // 2 - 1)[()] == 1
        assert right.count(m, (np.int64(1) << m) // 2)[()] == 1


def test_sibling_count_identity_after_many_insertions():
    rng = np.random.default_rng(0)
    spec = _spec(depth=10)
    post = pt_update(spec, rng.normal(size=10000))
    for m in range(1, spec.depth):
        keys, counts = post.levels[m - 1]
        for k, c in zip(keys.tolist(), counts.tolist()):
            child_sum = int(post.count(m + 1, np.int64(2 * k))[()]
                            + post.count(m + 1, np.int64(2 * k + 1))[()])
            assert child_sum == c
    total = post.levels[0][1].sum()
    assert total == 10000


def test_incremental_merge_equals_batch():
    rng = np.random.default_rng(3)
    y1, y2 = rng.normal(size=300), rng.normal(size=200)
    spec = _spec(depth=9)
    merged = pt_merge(pt_update(spec, y1), y2)
    batch = pt_update(spec, np.concatenate([y1, y2]))
    assert merged.n == batch.n
    for (k1, c1), (k2, c2) in zip(merged.levels, batch.levels):
        np.testing.assert_array_equal(k1, k2)
        np.testing.assert_array_equal(c1, c2)


def test_mean_density_integrates_to_one():
    rng = np.random.default_rng(5)
    spec = _spec(depth=10)
    post = pt_update(spec, rng.normal(loc=0.7, scale=1.6, size=2000))
    base = spec.base
    lo, hi = base.ppf(1e-6), base.ppf(1 - 1e-6)
    ys = np.linspace(lo, hi, 100001)
    dens = pt_mean_density(post, ys)
    mass = np.trapezoid(dens, ys)
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_fit_improves_on_base_for_bimodal_target():
    rng = np.random.default_rng(11)
    comp = rng.random(10000) < 0.5
    y = np.where(comp, rng.normal(-2.0, 0.5, 10000), rng.normal(2.0, 0.5, 10000))
    spec = _spec(depth=10, base=GaussianBase(0.0, 2.0))
    post = pt_update(spec, y)
    ys = np.linspace(-6, 6, 4001)
    truth = (0.5 * np.exp(-0.5 * ((ys + 2) / 0.5) ** 2)
             + 0.5 * np.exp(-0.5 * ((ys - 2) / 0.5) ** 2)) / (
                 0.5 * np.sqrt(2 * np.pi))
    fitted_l1 = np.trapezoid(np.abs(pt_mean_density(post, ys) - truth), ys)
    base_l1 = np.trapezoid(np.abs(spec.base.pdf(ys) - truth), ys)
    assert fitted_l1 < base_l1


def test_cdf_inverse_round_trip():
    rng = np.random.default_rng(7)
    post = pt_update(_spec(depth=10), rng.normal(size=500))
    ts = np.linspace(0.001, 0.999, 97)
    ys = pt_mean_inverse_cdf(post, ts)
    np.testing.assert_allclose(pt_mean_cdf(post, ys), ts, atol=1e-9)
    assert np.all(np.diff(ys) > 0)
    with pytest.raises(DataError):
        pt_mean_inverse_cdf(post, 0.0)


def test_sampler_prior_median_with_mean_thetas():
    post = pt_update(_spec(depth=10), np.empty(0))
    val = pt_sample_inverse_cdf(
        post, 0.5, theta_draw=lambda m, idx, a, b: a / (a + b))
    assert val == pytest.approx(0.0, abs=1e-9)


def test_sampler_monotone_for_shared_seed():
    rng = np.random.default_rng(13)
    post = pt_update(_spec(depth=9), rng.normal(size=200))
    us = np.linspace(0.01, 0.99, 60)
    for seed in (0, 1, 2):
        vals = [pt_sample_inverse_cdf(post, u, rng_seed=seed) for u in us]
        assert np.all(np.diff(vals) >= 0)


def test_sampler_domain_error():
    post = pt_update(_spec(depth=4), np.empty(0))
    for bad in (0.0, 1.0, -0.2, 1.4):
        with pytest.raises(DataError):
            pt_sample_inverse_cdf(post, bad)


def test_fresh_measure_samples_match_mean_cdf():
    rng = np.random.default_rng(17)
    post = pt_update(_spec(depth=10), rng.normal(size=1500))
    draws = pt_sample_marginal(post, 100000, seed=23)
    draws = np.sort(draws)
    grid_cdf = pt_mean_cdf(post, draws)
    emp = (np.arange(1, draws.size + 1) - 0.5) / draws.size
    ks = np.max(np.abs(grid_cdf - emp))
    assert ks < 0.02


def test_leaf_placement_stays_inside_leaf():
    spec = _spec(depth=6)
    post = pt_update(spec, np.array([0.3, -0.2, 1.4]))
    for u in np.linspace(0.05, 0.95, 19):
        y = pt_sample_inverse_cdf(post, float(u), rng_seed=5)
        assert np.isfinite(y)
        # produced point corresponds to a base-mass value inside (0, 1)
        assert 0.0 < spec.base.cdf(y) < 1.0


def test_serialization_round_trip():
    rng = np.random.default_rng(29)
    post = pt_update(_spec(depth=7, base=LaplaceBase(1.5, 2.0),
                           alpha_scale=0.5), rng.normal(size=400))
    text = polya_tree_to_text(post)
    back = polya_tree_from_text(text)
    assert back.n == post.n
    assert back.spec.depth == post.spec.depth
    assert back.spec.base == post.spec.base
    ys = np.linspace(-5, 8, 50)
    np.testing.assert_allclose(pt_mean_density(back, ys),
                               pt_mean_density(post, ys), rtol=1e-12)


def test_custom_schedule_cannot_serialize():
    spec = PolyaTreeSpec(base=GaussianBase(), depth=3,
                         alpha_schedule=lambda m: 2.0 * m)
    post = pt_update(spec, np.array([0.1, 0.2]))
    with pytest.raises(ConfigError):
        polya_tree_to_text(post)


def test_laplace_base_cdf_ppf_consistency():
    base = LaplaceBase(loc=-1.0, scale=3.0)
    us = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(base.cdf(base.ppf(us)), us, atol=1e-12)
    ys = np.linspace(-20, 20, 2001)
    dens_num = np.gradient(base.cdf(ys), ys)
    away_from_kink = np.abs(ys - base.loc) > 0.1
    np.testing.assert_allclose(base.pdf(ys)[away_from_kink][2:-2],
                               dens_num[away_from_kink][2:-2], rtol=5e-3)

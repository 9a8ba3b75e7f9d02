import csv

import numpy as np
import pytest

from plcopula.conditional import (ConditionalModel, LatentMixtureCDF,
                                  fit_composite)
from plcopula.dataset import RegressionDataset
from plcopula.empirical import EmpiricalMarginal
from plcopula.errors import ConfigError
from plcopula.plackett_luce import GaussianPrior, PLPosterior
from plcopula.polya_tree import GaussianBase, PolyaTreeSpec
from plcopula.predictive import (
    PosteriorConditional, forward_latent_u, forward_simulate, hpd_region,
    ks_uniform, pit_values, predict_draws, write_density_csv, write_draws_csv,
    write_hpd_csv, write_pit_csv,
)
from plcopula.simulate import MIXTURE3, gen_linear_gaussian, gen_mixture3


def _constant_x_model(n=400, seed=0):
    rng = np.random.default_rng(seed)
    y = MIXTURE3.rvs(n, rng)
    data = RegressionDataset(x=np.ones((n, 1)), y=y, feature_names=("x0",))
    return fit_composite(data, "ecdf", GaussianPrior(0.0, 1.0), seed=seed), data


def _two_sample_ks(a, b):
    allv = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), allv, side="right") / a.size
    fb = np.searchsorted(np.sort(b), allv, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def test_constant_rate_draws_resample_training():
    model, data = _constant_x_model()
    draws = predict_draws(model, np.array([1.0]), m=10000, seed=3)
    assert draws.scheme == "ecdf"
    assert _two_sample_ks(draws.samples, data.y) < 0.03


def test_degenerate_posterior_single_value_marginal():
    marginal = EmpiricalMarginal.fit(np.array([5.0]))
    pl = PLPosterior(beta_map=np.array([0.7]),
                     laplace_cov=np.array([[1e-300]]),
                     log_post_at_map=0.0, prior=GaussianPrior())
    latent = LatentMixtureCDF(np.array([0.7]))
    model = ConditionalModel(marginal=marginal, marginal_kind="ecdf", pl=pl,
                             fx_rows=np.array([[1.0]]), latent=latent,
                             feature_names=("x0",))
    draws = predict_draws(model, np.array([1.0]), m=200, seed=0)
    assert np.all(draws.samples == 5.0)


def test_scheme_marginal_compatibility():
    model, _ = _constant_x_model()
    with pytest.raises(ConfigError):
        predict_draws(model, np.array([1.0]), scheme="polya_tree")
    with pytest.raises(ConfigError):
        predict_draws(model, np.array([1.0]), scheme="nope")


def test_ecdf_and_bootstrap_schemes_agree():
    data = gen_mixture3(n=2000, seed=5)
    model = fit_composite(data, "ecdf", GaussianPrior(0.0, 1.0), seed=5)
    a = predict_draws(model, np.array([10.0]), m=6000, scheme="ecdf", seed=1)
    b = predict_draws(model, np.array([10.0]), m=6000, scheme="bootstrap",
                      seed=2)
    assert _two_sample_ks(a.samples, b.samples) < 0.03


def test_polya_tree_scheme_matches_plugin_conditional():
    data = gen_mixture3(n=1200, seed=7)
    spec = PolyaTreeSpec(base=GaussianBase(9.0, 5.0), depth=10)
    model = fit_composite(data, spec, GaussianPrior(0.0, 1.0), seed=7)
    x = np.array([9.0])
    draws = predict_draws(model, x, m=6000, seed=9)
    # draws (posterior-averaged, random measures) vs plug-in conditional CDF
    cdf_at_draws = model.conditional_cdf(x, np.sort(draws.samples))
    emp = (np.arange(1, draws.m + 1) - 0.5) / draws.m
    assert np.max(np.abs(cdf_at_draws - emp)) < 0.05


def test_monotone_coupling_of_latent_u():
    data = gen_mixture3(n=500, seed=11)
    model = fit_composite(data, "ecdf", GaussianPrior(0.0, 1.0), seed=11)
    beta = model.pl.beta_map
    lam1 = float(model.rate(np.array([4.0])))
    lam2 = float(model.rate(np.array([14.0])))
    assert lam1 < lam2
    rng = np.random.default_rng(0)
    e = rng.standard_exponential(50)
    z1, z2 = e / lam1, e / lam2  # same exponential, scaled by the rate ratio
    u1 = forward_latent_u(model, np.repeat(beta[None, :], 50, 0), z1)
    u2 = forward_latent_u(model, np.repeat(beta[None, :], 50, 0), z2)
    assert np.all(u1 >= u2)


def _linear_pt_model(n=300, seed=13):
    data = gen_linear_gaussian(n=n, seed=seed)
    spec = PolyaTreeSpec(base=GaussianBase(12.5, 6.0), depth=12)
    model = fit_composite(data, spec, GaussianPrior(0.0, 8.0), seed=seed)
    return model, data


def test_hpd_unimodal_single_interval_matches_central():
    # exactly symmetric case: prior-only tree (mean density = Gaussian base)
    # and constant rates, so the conditional is that Gaussian itself
    from plcopula.polya_tree import pt_update
    spec = PolyaTreeSpec(base=GaussianBase(3.0, 2.0), depth=10)
    marginal = pt_update(spec, np.empty(0))
    pl = PLPosterior(beta_map=np.array([0.2]), laplace_cov=np.array([[1e-12]]),
                     log_post_at_map=0.0, prior=GaussianPrior())
    model = ConditionalModel(marginal=marginal, marginal_kind="polya_tree",
                             pl=pl, fx_rows=np.ones((50, 1)),
                             latent=LatentMixtureCDF(np.full(50, 0.2)),
                             feature_names=("x0",))
    cond = PosteriorConditional(model, n_beta_draws=8, seed=1)
    region = hpd_region(model, np.array([1.0]), level=0.8, cond=cond)
    assert len(region.intervals) == 1
    assert region.mass == pytest.approx(0.8, abs=0.01)
    lo, hi = region.intervals[0]
    dy = cond.y_grid[1] - cond.y_grid[0]
    # central == HPD for a symmetric unimodal density: mu +- 1.2816 sigma
    assert lo == pytest.approx(3.0 - 1.281552 * 2.0, abs=4 * dy)
    assert hi == pytest.approx(3.0 + 1.281552 * 2.0, abs=4 * dy)


def test_hpd_multimodal_disjoint_intervals():
    data = gen_mixture3(n=1500, seed=17)
    spec = PolyaTreeSpec(base=GaussianBase(9.0, 5.0), depth=10)
    model = fit_composite(data, spec, GaussianPrior(0.0, 1.0), seed=17)
    cond = PosteriorConditional(model, n_beta_draws=24, seed=3)
    max_parts = 1
    for x in (6.0, 8.0, 10.0):
        region = hpd_region(model, np.array([x]), level=0.8, cond=cond)
        assert region.mass == pytest.approx(0.8, abs=0.01)
        max_parts = max(max_parts, len(region.intervals))
    assert max_parts >= 2


def test_hpd_contained_mass_reintegrates():
    model, _ = _linear_pt_model()
    cond = PosteriorConditional(model, n_beta_draws=16, seed=5)
    region = hpd_region(model, np.array([7.0]), level=0.8, cond=cond)
    dens = cond.density(np.array([7.0]))
    dy = cond.y_grid[1] - cond.y_grid[0]
    mask = np.zeros_like(dens, dtype=bool)
    for lo, hi in region.intervals:
        mask |= (cond.y_grid >= lo) & (cond.y_grid <= hi)
    assert dens[mask].sum() * dy == pytest.approx(region.level, abs=0.01)


def test_pit_calibrated_on_self_generated_data():
    model, data = _linear_pt_model(n=500, seed=19)
    rng = np.random.default_rng(23)
    x_new = rng.uniform(0, 10, size=(800, 1))
    y_new = forward_simulate(model, x_new, seed=29)
    pit, mq = pit_values(model, x_new, y_new, n_beta_draws=24, seed=31)
    ks = ks_uniform(pit)
    assert ks < 1.36 / np.sqrt(pit.size) + 0.02
    np.testing.assert_allclose(mq, (np.arange(1, 801) - 0.5) / 800)


def test_pit_detects_conditional_misspecification():
    data = gen_mixture3(n=1500, seed=37)
    spec = PolyaTreeSpec(base=GaussianBase(9.0, 5.0), depth=10)
    model = fit_composite(data, spec, GaussianPrior(0.0, 1.0), seed=37)
    # held-out responses generated at two fixed covariate values on the same
    # side of the rate spectrum (opposite sides partially cancel in a pooled
    # PIT, since the marginal is shared by construction)
    x_new = np.repeat([[10.0], [14.0]], 400, axis=0)
    y_new = forward_simulate(model, x_new, seed=41)
    pit_fit, _ = pit_values(model, x_new, y_new, n_beta_draws=16, seed=43)

    zero = PLPosterior(beta_map=np.zeros(1), laplace_cov=model.pl.laplace_cov,
                       log_post_at_map=0.0, prior=model.pl.prior)
    model_zero = ConditionalModel(
        marginal=model.marginal, marginal_kind=model.marginal_kind, pl=zero,
        fx_rows=model.fx_rows,
        latent=LatentMixtureCDF(np.zeros(model.fx_rows.shape[0])),
        feature_names=model.feature_names)
    pit_zero, _ = pit_values(model_zero, x_new, y_new, n_beta_draws=0)
    assert ks_uniform(pit_zero) >= 3.0 * ks_uniform(pit_fit)


@pytest.mark.slow
def test_hpd_coverage_on_model_generated_data():
    model, _ = _linear_pt_model(n=400, seed=43)
    cond = PosteriorConditional(model, n_beta_draws=32, seed=7)
    rng = np.random.default_rng(47)
    trials = 2000
    x_new = rng.uniform(0, 10, size=(trials, 1))
    y_new = forward_simulate(model, x_new, seed=53)
    hits = 0
    for i in range(trials):
        region = hpd_region(model, x_new[i], level=0.8, cond=cond)
        hits += int(region.contains(y_new[i]))
    assert abs(hits / trials - 0.8) <= 0.04


def test_csv_emitters_round_trip(tmp_path):
    model, _ = _constant_x_model(n=100)
    draws = predict_draws(model, np.array([1.0]), m=50, seed=0)
    p1 = tmp_path / "draws.csv"
    write_draws_csv(p1, draws)
    rows = list(csv.DictReader(open(p1)))
    assert len(rows) == 50
    np.testing.assert_allclose([float(r["y"]) for r in rows], draws.samples)

    region_model, _ = _linear_pt_model(n=200, seed=3)
    region = hpd_region(region_model, np.array([5.0]), level=0.8,
                        n_beta_draws=8, seed=1)
    p2 = tmp_path / "hpd.csv"
    write_hpd_csv(p2, region)
    rows = list(csv.DictReader(open(p2)))
    assert all(float(r["lo"]) <= float(r["hi"]) for r in rows)
    assert all(float(r["level"]) == 0.8 for r in rows)

    pit, mq = np.array([0.1, 0.5, 0.9]), np.array([1 / 6, 0.5, 5 / 6])
    p3 = tmp_path / "pit.csv"
    write_pit_csv(p3, mq, pit)
    rows = list(csv.DictReader(open(p3)))
    assert [float(r["pit"]) for r in rows] == [0.1, 0.5, 0.9]

    p4 = tmp_path / "dens.csv"
    write_density_csv(p4, np.array([0.0, 1.0]), np.array([0.25, 0.75]))
    rows = list(csv.DictReader(open(p4)))
    assert [float(r["density"]) for r in rows] == [0.25, 0.75]


def test_ks_uniform_statistic():
    assert ks_uniform(np.linspace(0.0005, 0.9995, 1000)) < 0.002
    assert ks_uniform(np.full(100, 0.5)) == pytest.approx(0.5, abs=0.01)

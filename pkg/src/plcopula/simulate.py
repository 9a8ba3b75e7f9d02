"""Synthetic data generators: a multimodal-mixture experiment, a linear
Gaussian benchmark, and a census-like generator (mixed covariates, heavy
tailed response with frequency spikes at round values) for scale testing.

All generators draw from the model's own forward process: covariates, then an
exponential arrival time with a log-linear rate, then the latent mixture
quantile pushed through the target marginal's quantile function. For very
large samples the mixture CDF over realized rates is summarized by
equal-count rate bins (the approximation error is orders of magnitude below
any test tolerance; exact evaluation is quadratic in n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .conditional import LatentMixtureCDF
from .dataset import (ColumnSpec, RegressionDataset, TableSchema,
                      encode_design, write_csv_columns, write_schema)
from .errors import DataError

_EXACT_RATE_LIMIT = 20000
_N_RATE_BINS = 2048


@dataclass(frozen=True)
class GaussianMixture:
    """Finite Gaussian mixture with closed-form cdf/pdf and bisected quantiles."""

    means: tuple
    sds: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w <= 0):
            raise DataError("weights must be positive and sum to 1")

    def _arr(self):
        return (np.asarray(self.means, dtype=np.float64),
                np.asarray(self.sds, dtype=np.float64),
                np.asarray(self.weights, dtype=np.float64))

    def pdf(self, y):
        m, s, w = self._arr()
        y = np.asarray(y, dtype=np.float64)[..., None]
        z = (y - m) / s
        comp = np.exp(-0.5 * z * z) / (s * np.sqrt(2.0 * np.pi))
        return comp @ w

    def cdf(self, y):
        m, s, w = self._arr()
        y = np.asarray(y, dtype=np.float64)[..., None]
        return ndtr((y - m) / s) @ w

    def ppf(self, u, tol=1e-12):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise DataError("quantile levels must lie strictly inside (0, 1)")
        m, s, _ = self._arr()
        a = np.full(u.shape, float(m.min() - 12.0 * s.max()))
        b = np.full(u.shape, float(m.max() + 12.0 * s.max()))
        for _ in range(200):
            mid = 0.5 * (a + b)
            below = self.cdf(mid) < u
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
            if np.max(b - a) < tol:
                break
        return 0.5 * (a + b)

    def rvs(self, n, rng):
        m, s, w = self._arr()
        comp = rng.choice(len(w), size=n, p=w)
        return rng.normal(m[comp], s[comp])


MIXTURE3 = GaussianMixture(means=(3.0, 9.0, 15.0), sds=(2.0, 0.5, 1.0),
                           weights=(0.5, 0.2, 0.3))


def realized_latent(eta, max_exact=_EXACT_RATE_LIMIT, n_bins=_N_RATE_BINS):
    """Latent mixture CDF over realized rates, binned above ``max_exact`` rows."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.size <= max_exact:
        return LatentMixtureCDF(eta)
    srt = np.sort(eta)
    edges = np.linspace(0, srt.size, n_bins + 1).astype(np.int64)
    reps = np.empty(n_bins)
    for k in range(n_bins):
        seg = srt[edges[k]:edges[k + 1]]
        reps[k] = np.log(np.exp(seg - seg.max()).mean()) + seg.max()
    return LatentMixtureCDF(reps)


def gen_mixture3(n=500, beta=0.25, seed=0, marginal=MIXTURE3):
    """Multimodal experiment: uniform covariate on (0, 20), log-linear rate,
    three-Gaussian response marginal."""
    if n < 2:
        raise DataError("need n >= 2")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 20.0, size=n)
    eta = beta * x
    lam = np.exp(eta)
    z = rng.standard_exponential(n) / lam
    latent = realized_latent(eta)
    u = np.clip(latent.fz(z), 1e-14, 1.0 - 1e-14)
    y = marginal.ppf(u)
    return RegressionDataset(x=x[:, None], y=y, feature_names=("x0",))


def gen_linear_gaussian(n=300, seed=0):
    """Linear benchmark: x uniform on (0, 10), response 3 + 2x plus sd-2 noise."""
    if n < 2:
        raise DataError("need n >= 2")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 10.0, size=n)
    y = 3.0 + 2.0 * x + 2.0 * rng.standard_normal(n)
    return RegressionDataset(x=x[:, None], y=y, feature_names=("x0",))


@dataclass(frozen=True)
class SpikedLognormal:
    """Heavy-tailed body with point masses at round values.

    cdf(y) = w_body * LogNormal.cdf(y) + sum_k w_k [y >= atom_k]; the quantile
    function returns atom values exactly when u lands inside a jump.
    """

    mu: float
    sigma: float
    atoms: tuple
    atom_weights: tuple

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        w = np.asarray(self.atom_weights, dtype=np.float64)
        if np.any(np.diff(a) <= 0):
            raise DataError("atoms must be strictly increasing")
        if np.any(w <= 0) or w.sum() >= 1.0:
            raise DataError("atom weights must be positive with sum < 1")

    @property
    def body_weight(self):
        return 1.0 - float(np.sum(self.atom_weights))

    def _jumps(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        w = np.asarray(self.atom_weights, dtype=np.float64)
        body = self.body_weight
        lo = body * ndtr((np.log(a) - self.mu) / self.sigma) + np.concatenate(
            ([0.0], np.cumsum(w)[:-1]))
        return a, w, lo, lo + w

    def cdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        a, w, _, _ = self._jumps()
        out = self.body_weight * ndtr(
            (np.log(np.maximum(y, 1e-300)) - self.mu) / self.sigma)
        out = out + (y[..., None] >= a) @ w
        return np.where(y <= 0, 0.0, out)

    def ppf(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise DataError("quantile levels must lie strictly inside (0, 1)")
        a, w, lo, hi = self._jumps()
        # which jump interval, if any, contains u
        k = np.searchsorted(lo, u, side="right") - 1
        k_clip = np.clip(k, 0, len(a) - 1)
        in_jump = (k >= 0) & (u < hi[k_clip])
        # body inversion: subtract the atom mass of every atom already passed
        cw = np.cumsum(w)
        passed = np.where(k >= 0, cw[k_clip], 0.0)
        u_body = np.clip((u - passed) / self.body_weight, 1e-15, 1 - 1e-15)
        body_val = np.exp(self.mu + self.sigma * ndtri(u_body))
        return np.where(in_jump, a[k_clip], body_val)


DEFAULT_CENSUS_MARGINAL = SpikedLognormal(
    mu=10.2, sigma=0.75,
    atoms=(20000.0, 25000.0, 30000.0, 35000.0, 40000.0, 50000.0),
    atom_weights=(0.030, 0.025, 0.030, 0.020, 0.025, 0.020))


_EDUCATION_LEVELS = (
    "hs_diploma", "no_school", "grade10", "grade11", "grade12_no_diploma",
    "ged", "some_college_lt1y", "some_college_1y_plus", "associate",
    "bachelor", "master", "professional_degree", "doctorate", "primary_only",
    "middle_school", "kindergarten")

_CENSUS_CATEGORICALS = (
    # (name, baseline, n_levels, level prefix)
    ("region", "region_00", 30, "region"),
    ("worker_class", "private_for_profit", 8, "worker"),
    ("education", "hs_diploma", 16, None),
    ("marital", "married", 5, "marital"),
    ("sex", "male", 2, None),
    ("transport", "works_from_home", 12, "transport"),
    ("other_language", "no", 2, None),
    ("disability", "none", 2, None),
    ("birth_quarter", "q1", 4, "q"),
    ("birth_area", "domestic", 24, "area"),
)

_STRONG_EFFECTS = {
    "hours_per_week": -0.03,
    "weeks_worked": -0.03,
    "age": -0.012,
    "education=bachelor": -0.8,
    "education=master": -1.0,
    "education=professional_degree": -1.4,
    "education=doctorate": -1.2,
    "sex=female": 0.35,
    "marital=never_married": 0.37,
    "disability=disabled": 0.19,
}


def _census_levels(name, baseline, count, prefix):
    if name == "education":
        return list(_EDUCATION_LEVELS)
    if name == "sex":
        return ["male", "female"]
    if name == "marital":
        return ["married", "never_married", "divorced", "widowed", "separated"]
    if name == "other_language":
        return ["no", "yes"]
    if name == "disability":
        return ["none", "disabled"]
    levels = [f"{prefix}_{k:02d}" for k in range(count)]
    levels[0] = baseline
    return levels


@dataclass(frozen=True)
class CensusLike:
    dataset: RegressionDataset
    schema: TableSchema
    raw: dict
    beta_true: np.ndarray
    strong_effects: dict
    marginal: SpikedLognormal


def gen_census_like(n, schema_seed=0, seed=0, marginal=DEFAULT_CENSUS_MARGINAL):
    """Mixed-covariate generator with the response drawn from the model.

    The response marginal is heavy tailed with mass spikes at round values;
    the planted coefficient vector (aligned to the encoded columns) is
    returned so sign-recovery can be checked end to end.
    """
    if n < 100:
        raise DataError("need n >= 100")
    srng = np.random.default_rng(schema_seed)
    rng = np.random.default_rng(seed)

    raw = {}
    raw["age"] = np.round(rng.uniform(16, 90, size=n), 0)
    raw["weight_lbs"] = np.round(np.clip(rng.normal(170, 35, size=n), 80, 350))
    hours = np.where(rng.random(n) < 0.45, 40.0,
                     np.round(rng.uniform(5, 80, size=n)))
    raw["hours_per_week"] = hours
    raw["weeks_worked"] = np.where(rng.random(n) < 0.5, 52.0,
                                   np.round(rng.uniform(1, 52, size=n)))
    raw["commute_minutes"] = np.round(np.clip(
        rng.exponential(25.0, size=n), 0, 180))

    columns = [ColumnSpec(name=c, kind="numeric")
               for c in ("age", "weight_lbs", "hours_per_week",
                         "weeks_worked", "commute_minutes")]
    for name, baseline, count, prefix in _CENSUS_CATEGORICALS:
        levels = _census_levels(name, baseline, count, prefix)
        probs = srng.dirichlet(np.full(len(levels), 3.0))
        raw[name] = np.asarray(levels)[rng.choice(len(levels), size=n, p=probs)]
        columns.append(ColumnSpec(name=name, kind="categorical",
                                  baseline=baseline))

    schema = TableSchema(response="income", columns=columns)
    raw["income"] = np.zeros(n)
    ds0 = encode_design(raw, schema)

    beta = np.zeros(ds0.p)
    strong = {}
    for name, value in _STRONG_EFFECTS.items():
        j = ds0.feature_names.index(name)
        beta[j] = value
        strong[name] = value

    eta = ds0.x @ beta
    eta -= eta.mean()  # the ranking factor is shift invariant; keep rates sane
    z = rng.standard_exponential(n) / np.exp(np.clip(eta, -700, 700))
    latent = realized_latent(eta)
    u = np.clip(latent.fz(z), 1e-14, 1.0 - 1e-14)
    y = marginal.ppf(u)
    raw["income"] = y
    dataset = RegressionDataset(x=ds0.x, y=y, feature_names=ds0.feature_names,
                                baseline_map=ds0.baseline_map)
    return CensusLike(dataset=dataset, schema=schema, raw=raw, beta_true=beta,
                      strong_effects=strong, marginal=marginal)


def true_conditional_density(marginal, latent, rate_value, y):
    """Conditional density of the generative model at one covariate's rate.

    ``marginal`` needs pdf/cdf; ``latent`` is the realized-rate mixture CDF.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    fy = np.asarray(marginal.pdf(y), dtype=np.float64)
    u = np.clip(np.asarray(marginal.cdf(y), dtype=np.float64), 0.0, 1.0 - 1e-12)
    z = latent.fz_inverse(u)
    log_num = np.log(rate_value) - rate_value * z
    log_den = latent.log_fz_density(z)
    return fy * np.exp(log_num - log_den)


def write_dataset_files(out_dir, raw, schema, name="data"):
    """CSV + schema pair consumable by the ingestion layer."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    order = [schema.response] + [c.name for c in schema.columns]
    csv_path = os.path.join(out_dir, f"{name}.csv")
    schema_path = os.path.join(out_dir, f"{name}.schema")
    write_csv_columns(csv_path, {k: np.asarray(v) for k, v in raw.items()},
                      order=order)
    write_schema(schema_path, schema)
    return csv_path, schema_path

"""Composition of a response marginal, a fitted ranking factor, and the
empirical covariate distribution into a full conditional regression model.

The latent "arrival time" Z has the mixture-of-exponentials CDF

    F_Z(z) = (1/n) sum_i (1 - exp(-rate_i z))

over the training rates; the conditional distribution of the response given a
new covariate row is

    F(y | x) = 1 - exp(-rate(x) * Fz_inverse(F_Y(y))),

and when the marginal has a density the conditional density is the marginal
density reweighted across its quantiles.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import (ColumnSpec, TableSchema, build_order, check_order)
from .dpm import DPMMarginal, DPMSpec, DPMState, dpm_gibbs_fit
from .empirical import BOOTSTRAP, FIXED, EmpiricalMarginal
from .errors import ConfigError, DataError, NumericError, PLCopulaError
from .plackett_luce import (GaussianPrior, PLPosterior, RateFunction, fit_map)
from .polya_tree import (PolyaTreeSpec, polya_tree_from_text,
                         polya_tree_to_text, pt_update)

_CHUNK = 1 << 22  # max elements per rates-x-points block


class LatentMixtureCDF:
    """F_Z over a fixed set of training rates, with a monotone inverse."""

    def __init__(self, log_rates, tol=1e-10):
        eta = np.clip(np.asarray(log_rates, dtype=np.float64), -700.0, 700.0)
        if eta.ndim != 1 or eta.size == 0 or not np.all(np.isfinite(eta)):
            raise DataError("log rates must be a finite nonempty vector")
        self.log_rates = eta
        self.rates = np.exp(eta)
        self.tol = float(tol)
        self._min_rate = float(self.rates.min())

    @property
    def n(self):
        return self.rates.size

    def _mean_survival(self, z):
        """(1/n) sum_i exp(-rate_i z), chunked over both axes."""
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        out = np.zeros(z.shape)
        rows = max(1, _CHUNK // max(1, z.size))
        for start in range(0, self.n, rows):
            r = self.rates[start:start + rows]
            out += np.exp(-np.outer(r, z)).sum(axis=0)
        return out / self.n

    def fz(self, z):
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        if np.any(z < 0):
            raise DataError("z must be nonnegative")
        out = 1.0 - self._mean_survival(z)
        return float(out[0]) if scalar else out

    def log_fz_density(self, z):
        """log f_Z(z) = logsumexp_i(eta_i - rate_i z) - log n."""
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        out = np.full(z.shape, -np.inf)
        rows = max(1, _CHUNK // max(1, z.size))
        for start in range(0, self.n, rows):
            eta = self.log_rates[start:start + rows]
            block = eta[:, None] - np.outer(self.rates[start:start + rows], z)
            m = block.max(axis=0)
            part = m + np.log(np.exp(block - m).sum(axis=0))
            out = np.logaddexp(out, part)
        return out - np.log(self.n)

    def fz_inverse(self, u, max_iter=200):
        """Unique root of fz(z) = u by bracket doubling plus bisection."""
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any(u < 0.0) or np.any(u >= 1.0):
            raise DataError("u must lie in [0, 1)")
        hi = 1.0 / self._min_rate
        umax = float(u.max(initial=0.0))
        for _ in range(max_iter):
            if self.fz(hi) >= umax:
                break
            hi *= 2.0
        else:
            raise NumericError("failed to bracket fz inverse")
        a = np.zeros(u.shape)
        b = np.full(u.shape, hi)
        for _ in range(max_iter):
            mid = 0.5 * (a + b)
            fm = self.fz(mid)
            below = fm < u
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
            if float(np.max(np.abs(fm - u))) < self.tol:
                break
        out = 0.5 * (a + b)
        out[u == 0.0] = 0.0
        return float(out[0]) if scalar else out


def pairwise_prob(rate, x_i, x_j):
    """P(Y_i <= Y_j | x_i, x_j) = rate_i / (rate_i + rate_j), via a logistic."""
    eta_i = rate.log_rate(np.atleast_2d(np.asarray(x_i, dtype=np.float64)))
    eta_j = rate.log_rate(np.atleast_2d(np.asarray(x_j, dtype=np.float64)))
    out = expit(eta_i - eta_j)
    return float(out[0]) if out.size == 1 else out


MARGINAL_ECDF = "ecdf"
MARGINAL_BOOTSTRAP = "bootstrap"
MARGINAL_POLYA_TREE = "polya_tree"
MARGINAL_DPM = "dpm"


@dataclass
class ConditionalModel:
    """Composed regression model: marginal + ranking posterior + empirical F_X."""

    marginal: object
    marginal_kind: str
    pl: PLPosterior
    fx_rows: np.ndarray
    latent: LatentMixtureCDF
    feature_names: tuple
    schema: TableSchema | None = None
    seed: int = 0

    @property
    def rate_function(self):
        return self.pl.rate_function()

    def rate(self, x_new):
        return self.rate_function.rate(np.asarray(x_new, dtype=np.float64))

    def log_rate(self, x_new):
        return self.rate_function.log_rate(np.asarray(x_new, dtype=np.float64))

    def conditional_cdf(self, x_new, y):
        """Plug-in F(y | x_new) at the MAP rate and posterior-mean marginal."""
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        u_raw = np.asarray(self.marginal.cdf(y), dtype=np.float64)
        u = np.clip(u_raw, 0.0, 1.0 - 1e-12)
        z = self.latent.fz_inverse(u)
        lam = float(self.rate(np.asarray(x_new)))
        out = -np.expm1(-lam * z)
        out[u_raw >= 1.0 - 1e-12] = 1.0
        return float(out[0]) if scalar else out

    def conditional_density(self, x_new, y):
        """Plug-in f(y | x_new); requires a density-capable marginal."""
        if not getattr(self.marginal, "has_density", False):
            self.marginal.density(y)  # raises UnsupportedDensityError
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        fy = np.asarray(self.marginal.density(y), dtype=np.float64)
        u = np.clip(np.asarray(self.marginal.cdf(y), dtype=np.float64),
                    0.0, 1.0 - 1e-12)
        z = self.latent.fz_inverse(u)
        log_num = float(self.log_rate(np.asarray(x_new))) \
            - float(self.rate(np.asarray(x_new))) * z
        log_den = self.latent.log_fz_density(z)
        out = fy * np.exp(log_num - log_den)
        return float(out[0]) if scalar else out

    def conditional_log_likelihood(self, x, y):
        """Diagnostic evaluator of the full conditional log likelihood
        sum_i log f(y_i | x_i); not an inference target."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        total = 0.0
        for xi, yi in zip(x, y):
            d = self.conditional_density(xi, yi)
            if d <= 0:
                return -np.inf
            total += np.log(d)
        return float(total)

    def latent_for_beta(self, beta):
        """F_Z rebuilt at a posterior draw of the coefficients."""
        eta = self.pl.sign * (self.fx_rows @ np.asarray(beta, dtype=np.float64))
        return LatentMixtureCDF(eta, tol=self.latent.tol)

    def rate_summary(self):
        eta = self.latent.log_rates
        qs = np.quantile(eta, [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
        return {"n_rows": int(eta.size), "log_rate_mean": float(eta.mean()),
                "log_rate_quantiles": [float(q) for q in qs]}


def _fit_marginal(y, marginal_spec, seed):
    if isinstance(marginal_spec, str):
        kind = marginal_spec.replace("-", "_")
        if kind == MARGINAL_ECDF:
            return EmpiricalMarginal.fit(y, FIXED), MARGINAL_ECDF
        if kind == MARGINAL_BOOTSTRAP:
            return EmpiricalMarginal.fit(y, BOOTSTRAP, seed=seed), MARGINAL_BOOTSTRAP
        raise ConfigError(f"unknown marginal {marginal_spec!r}")
    if isinstance(marginal_spec, PolyaTreeSpec):
        return pt_update(marginal_spec, y), MARGINAL_POLYA_TREE
    if isinstance(marginal_spec, DPMSpec):
        marginal_spec = DPMFitSpec(spec=marginal_spec)
    if isinstance(marginal_spec, DPMFitSpec):
        states = dpm_gibbs_fit(marginal_spec.spec, y,
                               n_iter=marginal_spec.n_iter,
                               burn_in=marginal_spec.burn_in,
                               seed=seed, thin=marginal_spec.thin)
        return DPMMarginal(marginal_spec.spec, states), MARGINAL_DPM
    raise ConfigError(f"unsupported marginal spec {type(marginal_spec).__name__}")


@dataclass(frozen=True)
class DPMFitSpec:
    """DPM hyperparameters together with the Gibbs runtime settings."""

    spec: DPMSpec
    n_iter: int = 2000
    burn_in: int = 500
    thin: int = 10


def fit_composite(data, marginal_spec, prior=None, sign=1, seed=0, order=None,
                  schema=None, fx_max_rows=20000, tol=1e-8):
    """Composite fit: marginal on y alone, ranking factor on (order, x) alone,
    empirical covariate distribution. The three components are independent.

    ``fx_max_rows`` caps the rows kept for the latent mixture used in
    prediction; beyond it a seeded subsample stands in for the empirical
    covariate distribution (fitting itself always uses every row).
    """
    if order is None:
        order = build_order(data.y, tie_seed=seed)
    check_order(data, order)

    try:
        marginal, kind = _fit_marginal(data.y, marginal_spec, seed)
    except PLCopulaError as e:
        e.args = (f"[marginal] {e.args[0]}",) + e.args[1:]
        raise
    try:
        pl = fit_map(data, order, prior or GaussianPrior(), sign=sign, tol=tol)
    except PLCopulaError as e:
        e.args = (f"[ranking-factor] {e.args[0]}",) + e.args[1:]
        raise

    if data.n > fx_max_rows:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(data.n, size=fx_max_rows, replace=False))
        fx_rows = np.ascontiguousarray(data.x[idx])
    else:
        fx_rows = data.x
    latent = LatentMixtureCDF(RateFunction(beta=pl.beta_map,
                                           sign=sign).log_rate(fx_rows))
    return ConditionalModel(marginal=marginal, marginal_kind=kind, pl=pl,
                            fx_rows=fx_rows, latent=latent,
                            feature_names=data.feature_names, schema=schema,
                            seed=seed)


# ---------------------------------------------------------------------------
# Plackett-Luce copula on the unit square (uniform covariate distribution)

def copula_eval(rate_fn, u1, u2, n_quad=256):
    """C(u1, u2) = u1 - integral_0^u1 exp(-rate(w) Fz_inverse(u2)) dw.

    ``rate_fn`` maps [0, 1] to positive rates (vectorized); the covariate
    distribution is uniform on the unit interval, the setting in which the
    copula has this closed display. Gauss-Legendre quadrature throughout.
    """
    u1 = float(u1)
    u2 = float(u2)
    if not (0.0 <= u1 <= 1.0 and 0.0 <= u2 <= 1.0):
        raise DataError("copula arguments must lie in [0, 1]")
    if u1 == 0.0:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    w01 = 0.5 * weights
    x01 = 0.5 * (nodes + 1.0)
    rates01 = np.asarray(rate_fn(x01), dtype=np.float64)
    if np.any(rates01 <= 0) or not np.all(np.isfinite(rates01)):
        raise DataError("rate_fn must be positive and finite on [0, 1]")

    u2c = min(u2, 1.0 - 1e-13)
    z2 = _invert_quadrature_fz(rates01, w01, u2c)
    xs = u1 * x01
    rates_xs = np.asarray(rate_fn(xs), dtype=np.float64)
    integral = u1 * float(np.sum(w01 * np.exp(-rates_xs * z2)))
    return u1 - integral


def _invert_quadrature_fz(rates, weights, u, tol=1e-13, max_iter=300):
    if u <= 0.0:
        return 0.0

    def fz(z):
        return float(np.sum(weights * -np.expm1(-rates * z)))

    hi = 1.0 / float(rates.min())
    for _ in range(max_iter):
        if fz(hi) >= u:
            break
        hi *= 2.0
    else:
        raise NumericError("failed to bracket the copula latent quantile")
    a, b = 0.0, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if fz(mid) < u:
            a = mid
        else:
            b = mid
        if abs(fz(mid) - u) < tol:
            break
    return 0.5 * (a + b)


def copula_sample(rate_fn, n, seed=0, n_quad=256):
    """(U_x, U_y) pairs from the copula with uniform covariates on [0, 1]."""
    rng = np.random.default_rng(seed)
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    w01 = 0.5 * weights
    x01 = 0.5 * (nodes + 1.0)
    rates01 = np.asarray(rate_fn(x01), dtype=np.float64)
    ux = rng.uniform(size=n)
    z = rng.exponential(size=n) / np.asarray(rate_fn(ux), dtype=np.float64)
    uy = w01 @ -np.expm1(-np.outer(rates01, z))
    return ux, uy


# ---------------------------------------------------------------------------
# model serialization (single JSON container)

def _schema_to_dict(schema):
    if schema is None:
        return None
    return {
        "response": schema.response,
        "standardize": schema.standardize,
        "fitted": schema.fitted,
        "columns": [
            {"name": c.name, "kind": c.kind, "baseline": c.baseline,
             "levels": list(c.levels) if c.levels is not None else None,
             "mean": c.mean, "sd": c.sd}
            for c in schema.columns
        ],
    }


def _schema_from_dict(d):
    if d is None:
        return None
    cols = []
    for c in d["columns"]:
        spec = ColumnSpec(name=c["name"], kind=c["kind"], baseline=c["baseline"],
                          levels=tuple(c["levels"]) if c["levels"] is not None
                          else None)
        spec.mean, spec.sd = c["mean"], c["sd"]
        cols.append(spec)
    return TableSchema(response=d["response"], columns=cols,
                       standardize=d["standardize"], fitted=d["fitted"])


def _marginal_payload(model):
    m = model.marginal
    kind = model.marginal_kind
    if kind in (MARGINAL_ECDF, MARGINAL_BOOTSTRAP):
        return {"kind": kind, "values": m.sorted_values.tolist(),
                "weights": m.weights.tolist() if m.weights is not None else None}
    if kind == MARGINAL_POLYA_TREE:
        return {"kind": kind, "text": polya_tree_to_text(m)}
    if kind == MARGINAL_DPM:
        return {"kind": kind, "n": m.n,
                "spec": {"concentration": m.spec.concentration,
                         "mean": m.spec.mean, "kappa": m.spec.kappa,
                         "df": m.spec.df, "scale": m.spec.scale},
                "states": [{"counts": s.counts.tolist(),
                            "sums": s.sums.tolist(),
                            "sumsqs": s.sumsqs.tolist(),
                            "iteration": s.iteration, "seed": s.seed}
                           for s in m.states]}
    raise ConfigError(f"cannot serialize marginal kind {kind!r}")


def _marginal_from_payload(d):
    kind = d["kind"]
    if kind in (MARGINAL_ECDF, MARGINAL_BOOTSTRAP):
        mode = FIXED if kind == MARGINAL_ECDF else BOOTSTRAP
        w = np.asarray(d["weights"]) if d["weights"] is not None else None
        return EmpiricalMarginal(sorted_values=np.asarray(d["values"]),
                                 mode=mode, weights=w), kind
    if kind == MARGINAL_POLYA_TREE:
        return polya_tree_from_text(d["text"]), kind
    if kind == MARGINAL_DPM:
        spec = DPMSpec(**d["spec"])
        states = []
        for s in d["states"]:
            counts = np.asarray(s["counts"], dtype=np.int64)
            # labels are reconstructed canonically; prediction only needs stats
            assignments = np.repeat(np.arange(counts.size), counts)
            states.append(DPMState(
                spec=spec, assignments=assignments, counts=counts,
                sums=np.asarray(s["sums"]), sumsqs=np.asarray(s["sumsqs"]),
                iteration=s["iteration"], seed=s["seed"]))
        return DPMMarginal(spec, states), kind
    raise ConfigError(f"unknown marginal kind {kind!r}")


def save_model(path, model):
    payload = {
        "format": "plcopula-model",
        "version": 1,
        "sign": model.pl.sign,
        "beta_map": model.pl.beta_map.tolist(),
        "laplace_cov": model.pl.laplace_cov.tolist(),
        "log_post_at_map": model.pl.log_post_at_map,
        "prior_mean": np.broadcast_to(
            np.asarray(model.pl.prior.mean, dtype=np.float64),
            (model.pl.p,)).tolist(),
        "prior_var": np.broadcast_to(
            np.asarray(model.pl.prior.var, dtype=np.float64),
            (model.pl.p,)).tolist(),
        "grad_norm": model.pl.grad_norm,
        "n_iter": model.pl.n_iter,
        "mh_samples": model.pl.mh_samples.tolist()
        if model.pl.mh_samples is not None else None,
        "mh_acceptance": model.pl.mh_acceptance,
        "feature_names": list(model.feature_names),
        "marginal": _marginal_payload(model),
        "fx_rows": model.fx_rows.tolist(),
        "rate_summary": model.rate_summary(),
        "schema": _schema_to_dict(model.schema),
        "seed": model.seed,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != "plcopula-model":
        raise DataError(f"{path}: not a model file")
    marginal, kind = _marginal_from_payload(d["marginal"])
    prior = GaussianPrior(mean=np.asarray(d["prior_mean"]),
                          var=np.asarray(d["prior_var"]))
    mh = np.asarray(d["mh_samples"]) if d["mh_samples"] is not None else None
    pl = PLPosterior(beta_map=np.asarray(d["beta_map"]),
                     laplace_cov=np.asarray(d["laplace_cov"]),
                     log_post_at_map=d["log_post_at_map"], prior=prior,
                     sign=d["sign"], grad_norm=d["grad_norm"],
                     n_iter=d["n_iter"], mh_samples=mh,
                     mh_acceptance=d["mh_acceptance"])
    fx_rows = np.asarray(d["fx_rows"], dtype=np.float64)
    latent = LatentMixtureCDF(pl.rate_function().log_rate(fx_rows))
    return ConditionalModel(marginal=marginal, marginal_kind=kind, pl=pl,
                            fx_rows=fx_rows, latent=latent,
                            feature_names=tuple(d["feature_names"]),
                            schema=_schema_from_dict(d["schema"]),
                            seed=d["seed"])

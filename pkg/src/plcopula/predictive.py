"""Posterior predictive simulation, HPD regions, and calibration diagnostics.

Forward process per posterior draw j: sample coefficients, draw the latent
arrival time Z' ~ Exp(rate_j(x')), push it through the empirical-mixture CDF
to get a quantile level u_j, then invert the response marginal by the scheme
matching the marginal: order statistics for the empirical CDF, weighted order
statistics under the Bayesian bootstrap, the tree traversal for a Polya tree,
and an inner Monte Carlo order statistic for a DPM.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .conditional import MARGINAL_BOOTSTRAP, MARGINAL_DPM, MARGINAL_ECDF, \
    MARGINAL_POLYA_TREE
from .dpm import dpm_draw_marginal_sample
from .empirical import EmpiricalMarginal
from .errors import ConfigError, DataError
from .polya_tree import PolyaTreePosterior, pt_sample_marginal

_CHUNK = 1 << 22

SCHEMES = (MARGINAL_ECDF, MARGINAL_BOOTSTRAP, MARGINAL_POLYA_TREE, MARGINAL_DPM)


def _seed_key(seed, *extra):
    """Flatten (seed, stream-id...) into one entropy tuple for default_rng."""
    if isinstance(seed, (tuple, list)):
        return (*(int(s) for s in seed), *extra)
    return (int(seed), *extra)


@dataclass(frozen=True)
class PredictiveDraws:
    x_new: np.ndarray
    samples: np.ndarray
    scheme: str
    seed: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.size < 1 or not np.all(np.isfinite(s)):
            raise DataError("samples must be finite and nonempty")
        object.__setattr__(self, "samples", s)

    @property
    def m(self):
        return self.samples.size


@dataclass(frozen=True)
class HPDRegion:
    level: float
    intervals: tuple
    threshold: float
    mass: float

    def contains(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(y.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (y >= lo) & (y <= hi)
        return out if out.ndim else bool(out)

    @property
    def total_length(self):
        return float(sum(hi - lo for lo, hi in self.intervals))


def forward_latent_u(model, betas, z_values):
    """Quantile levels u_j = 1 - (1/n) sum_i exp(-z_j rate_j(x_i)).

    ``betas`` has one row per draw; ``z_values`` one latent arrival time per
    draw. Chunked over the stored covariate rows.
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z_values, dtype=np.float64))
    if betas.shape[0] != z.shape[0]:
        raise DataError("one z per beta draw required")
    x = model.fx_rows
    n = x.shape[0]
    m = z.shape[0]
    acc = np.zeros(m)
    rows = max(1, _CHUNK // max(1, m))
    for start in range(0, n, rows):
        eta = model.pl.sign * (x[start:start + rows] @ betas.T)
        lam = np.exp(np.clip(eta, -700.0, 700.0))
        acc += np.exp(-lam * z[None, :]).sum(axis=0)
    return 1.0 - acc / n


def _default_scheme(model):
    return model.marginal_kind


def _check_scheme(model, scheme):
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}")
    marg = model.marginal
    if scheme in (MARGINAL_ECDF, MARGINAL_BOOTSTRAP):
        if not isinstance(marg, EmpiricalMarginal):
            raise ConfigError(
                f"scheme {scheme!r} needs an empirical marginal, "
                f"got {model.marginal_kind!r}")
    elif scheme == MARGINAL_POLYA_TREE:
        if not isinstance(marg, PolyaTreePosterior):
            raise ConfigError(
                f"scheme {scheme!r} needs a polya-tree marginal, "
                f"got {model.marginal_kind!r}")
    elif scheme == MARGINAL_DPM:
        if model.marginal_kind != MARGINAL_DPM:
            raise ConfigError(
                f"scheme {scheme!r} needs a dpm marginal, "
                f"got {model.marginal_kind!r}")


def predict_draws(model, x_new, m=2000, scheme=None, seed=0, dpm_inner_n=4096):
    """m posterior predictive draws at one covariate row."""
    if m < 1:
        raise DataError("need m >= 1 draws")
    scheme = scheme or _default_scheme(model)
    _check_scheme(model, scheme)
    x_new = np.asarray(x_new, dtype=np.float64)
    rng = np.random.default_rng(_seed_key(seed, 1))
    betas = model.pl.draw_beta(m, seed=_seed_key(seed, 0))
    eta_new = model.pl.sign * (betas @ x_new)
    lam_new = np.exp(np.clip(eta_new, -700.0, 700.0))
    z = rng.standard_exponential(m) / lam_new
    u = forward_latent_u(model, betas, z)
    u = np.clip(u, 1e-15, 1.0 - 1e-15)

    if scheme == MARGINAL_ECDF:
        vals = model.marginal.sorted_values
        idx = np.ceil(vals.size * u).astype(np.int64) - 1
        samples = vals[np.clip(idx, 0, vals.size - 1)]
    elif scheme == MARGINAL_BOOTSTRAP:
        samples = _bootstrap_draws(model.marginal.sorted_values, u, rng)
    elif scheme == MARGINAL_POLYA_TREE:
        samples = pt_sample_marginal(model.marginal, u,
                                     seed=_seed_key(seed, 2))
    else:  # dpm
        states = model.marginal.states
        samples = np.empty(m)
        for j in range(m):
            state = states[j % len(states)]
            inner = dpm_draw_marginal_sample(state, dpm_inner_n,
                                             seed=_seed_key(seed, 3, j))
            k = int(np.ceil(dpm_inner_n * u[j])) - 1
            samples[j] = inner[np.clip(k, 0, dpm_inner_n - 1)]
    return PredictiveDraws(x_new=x_new, samples=samples, scheme=scheme,
                           seed=seed)


def _bootstrap_draws(values, u, rng):
    n = values.size
    m = u.size
    out = np.empty(m)
    block = max(1, _CHUNK // max(1, n))
    for start in range(0, m, block):
        stop = min(start + block, m)
        w = rng.standard_exponential((stop - start, n))
        cw = np.cumsum(w, axis=1)
        target = u[start:stop] * cw[:, -1]
        idx = (cw < target[:, None]).sum(axis=1)
        out[start:stop] = values[np.clip(idx, 0, n - 1)]
    return out


class PosteriorConditional:
    """Posterior-averaged conditional CDF/density machinery.

    The expensive structures (latent quantile paths and mixture densities per
    coefficient draw on a fixed response grid) are built once and shared over
    arbitrarily many covariate rows, which is what makes coverage sweeps and
    per-row HPD regions affordable.
    """

    def __init__(self, model, n_beta_draws=64, grid_size=2048, seed=0,
                 q_lo=1e-4, q_hi=None):
        if not getattr(model.marginal, "has_density", False):
            raise ConfigError("HPD/density grids need a density-capable marginal")
        q_hi = 1.0 - q_lo if q_hi is None else q_hi
        self.model = model
        lo = float(model.marginal.inverse_cdf(q_lo))
        hi = float(model.marginal.inverse_cdf(q_hi))
        self.y_grid = np.linspace(lo, hi, grid_size)
        self.f_y = np.asarray(model.marginal.density(self.y_grid))
        u = np.clip(np.asarray(model.marginal.cdf(self.y_grid)), 0.0,
                    1.0 - 1e-12)
        self.u_grid = u
        if n_beta_draws <= 0:
            self.betas = model.pl.beta_map[None, :]
        else:
            self.betas = np.atleast_2d(
                model.pl.draw_beta(n_beta_draws, seed=_seed_key(seed, 7)))
        zs, logdens = [], []
        for b in self.betas:
            latent = model.latent_for_beta(b)
            z = latent.fz_inverse(u)
            zs.append(z)
            logdens.append(latent.log_fz_density(z))
        self.z = np.vstack(zs)              # (draws, grid)
        self.log_fz = np.vstack(logdens)    # (draws, grid)

    def _lam(self, x_new):
        eta = self.model.pl.sign * (self.betas @ np.asarray(x_new,
                                                            dtype=np.float64))
        return np.exp(np.clip(eta, -700.0, 700.0))

    def density(self, x_new):
        """Posterior-averaged conditional density on the shared y grid."""
        lam = self._lam(x_new)
        log_w = (np.log(lam)[:, None] - lam[:, None] * self.z - self.log_fz)
        return self.f_y * np.exp(log_w).mean(axis=0)

    def cdf_at(self, x_new, y):
        """Posterior-averaged conditional CDF at arbitrary response values."""
        u_raw = np.asarray(self.model.marginal.cdf(np.atleast_1d(y)),
                           dtype=np.float64)
        u = np.clip(u_raw, 0.0, 1.0 - 1e-12)
        lam = self._lam(x_new)
        total = np.zeros(u.shape)
        for j, b in enumerate(self.betas):
            latent = self.model.latent_for_beta(b)
            z = latent.fz_inverse(u)
            total += -np.expm1(-lam[j] * z)
        out = total / len(self.betas)
        out[u_raw >= 1.0 - 1e-12] = 1.0
        return out


def hpd_region(model, x_new, level=0.8, cond=None, n_beta_draws=64,
               grid_size=2048, seed=0, mass_tol=0.005):
    """Highest-posterior-density region of the predictive at one covariate row.

    Super-level sets of the posterior-averaged conditional density on a grid;
    the density threshold is found by bisection until the contained mass is
    within ``mass_tol`` of ``level``. Disjoint intervals are returned when the
    predictive is multimodal.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError("level must be in (0, 1)")
    if cond is None:
        cond = PosteriorConditional(model, n_beta_draws=n_beta_draws,
                                    grid_size=grid_size, seed=seed)
    dens = cond.density(np.asarray(x_new, dtype=np.float64))
    y = cond.y_grid
    dy = y[1] - y[0]

    def mass_above(t):
        return float(dens[dens >= t].sum() * dy)

    lo_t, hi_t = 0.0, float(dens.max())
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        mass = mass_above(mid)
        if abs(mass - level) <= mass_tol:
            lo_t = hi_t = mid
            break
        if mass > level:
            lo_t = mid
        else:
            hi_t = mid
    threshold = 0.5 * (lo_t + hi_t)
    mass = mass_above(threshold)

    keep = dens >= threshold
    intervals = []
    start = None
    for i, flag in enumerate(keep):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            intervals.append((float(y[start]), float(y[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(y[start]), float(y[-1])))
    return HPDRegion(level=level, intervals=tuple(intervals),
                     threshold=threshold, mass=mass)


def pit_values(model, x_heldout, y_heldout, n_beta_draws=32, seed=0):
    """Probability integral transforms of held-out pairs, posterior averaged.

    Returns (sorted PIT values, matching uniform reference quantiles) ready
    for qq plotting; ``n_beta_draws=0`` evaluates the plug-in MAP model.
    """
    x = np.atleast_2d(np.asarray(x_heldout, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y_heldout, dtype=np.float64))
    if x.shape[0] != y.shape[0]:
        raise DataError("x and y must pair up")
    u_raw = np.asarray(model.marginal.cdf(y), dtype=np.float64)
    u = np.clip(u_raw, 0.0, 1.0 - 1e-12)
    if n_beta_draws <= 0:
        betas = model.pl.beta_map[None, :]
    else:
        betas = np.atleast_2d(model.pl.draw_beta(n_beta_draws,
                                               seed=_seed_key(seed, 11)))
    total = np.zeros(y.shape)
    for b in betas:
        latent = model.latent_for_beta(b)
        z = latent.fz_inverse(u)
        lam = np.exp(np.clip(model.pl.sign * (x @ b), -700.0, 700.0))
        total += -np.expm1(-lam * z)
    pit = total / len(betas)
    pit[u_raw >= 1.0 - 1e-12] = 1.0
    pit = np.sort(pit)
    mq = (np.arange(1, pit.size + 1) - 0.5) / pit.size
    return pit, mq


def ks_uniform(pit):
    """Kolmogorov-Smirnov distance of sorted values in [0, 1] to uniform."""
    pit = np.sort(np.asarray(pit, dtype=np.float64))
    n = pit.size
    hi = np.max(np.arange(1, n + 1) / n - pit)
    lo = np.max(pit - np.arange(0, n) / n)
    return float(max(hi, lo))


def forward_simulate(model, x_rows, seed=0, use_posterior_draws=True):
    """Draw one response per covariate row from the fitted model.

    Uses the posterior-mean marginal inverse; coefficient uncertainty is
    included by default (one posterior draw per row).
    """
    x = np.atleast_2d(np.asarray(x_rows, dtype=np.float64))
    m = x.shape[0]
    rng = np.random.default_rng(_seed_key(seed, 13))
    if use_posterior_draws:
        betas = np.atleast_2d(model.pl.draw_beta(m, seed=_seed_key(seed, 17)))
    else:
        betas = np.repeat(model.pl.beta_map[None, :], m, axis=0)
    eta = model.pl.sign * np.einsum("ij,ij->i", x, betas)
    lam = np.exp(np.clip(eta, -700.0, 700.0))
    z = rng.standard_exponential(m) / lam
    u = forward_latent_u(model, betas, z)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return np.asarray(model.marginal.inverse_cdf(u), dtype=np.float64)


# ---------------------------------------------------------------------------
# CSV emitters (atomic: temp file + rename)

def _atomic_csv(path, header, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def write_draws_csv(path, draws):
    _atomic_csv(path, ["j", "y"],
                ((j, repr(float(v))) for j, v in enumerate(draws.samples)))


def write_hpd_csv(path, regions):
    if isinstance(regions, HPDRegion):
        regions = [regions]
    rows = []
    for r in regions:
        for lo, hi in r.intervals:
            rows.append((repr(lo), repr(hi), repr(r.level)))
    _atomic_csv(path, ["lo", "hi", "level"], rows)


def write_pit_csv(path, uniform_q, pit):
    _atomic_csv(path, ["uniform_q", "pit"],
                ((repr(float(q)), repr(float(p)))
                 for q, p in zip(uniform_q, pit)))


def write_density_csv(path, y_grid, density):
    _atomic_csv(path, ["y", "density"],
                ((repr(float(y)), repr(float(d)))
                 for y, d in zip(y_grid, density)))

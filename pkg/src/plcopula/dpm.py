"""Dirichlet process mixture of univariate Gaussians for the response
marginal: collapsed Gibbs fitting with a conjugate normal-inverse-gamma base,
Rao-Blackwellized posterior predictive, and random-measure draws.

The base uses the 1-D inverted-Wishart parameter convention:
mu | s2 ~ N(mean, s2/kappa) and s2 ~ IG(df/2, scale/2), so IW(df, scale)
hyperparameters carry over unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, stdtr

from .errors import ConfigError, DataError, NumericError


@dataclass(frozen=True)
class DPMSpec:
    concentration: float = 1.0
    mean: float = 0.0
    kappa: float = 1.0
    df: float = 4.0
    scale: float = 1.0

    def __post_init__(self):
        if min(self.concentration, self.kappa, self.df, self.scale) <= 0:
            raise ConfigError("concentration, kappa, df and scale must be positive")


def _student_params(spec, cnt, sm, sq):
    """Posterior-predictive Student-t (dof, loc, scale) for cluster stats.

    Works elementwise on arrays; cnt == 0 reproduces the prior predictive.
    """
    cnt = np.asarray(cnt, dtype=np.float64)
    sm = np.asarray(sm, dtype=np.float64)
    sq = np.asarray(sq, dtype=np.float64)
    kn = spec.kappa + cnt
    mun = (spec.kappa * spec.mean + sm) / kn
    an = 0.5 * (spec.df + cnt)
    with np.errstate(invalid="ignore", divide="ignore"):
        ybar = np.where(cnt > 0, sm / np.maximum(cnt, 1.0), 0.0)
        ss = np.where(cnt > 0, sq - sm * ybar, 0.0)
        shrink = np.where(cnt > 0,
                          spec.kappa * cnt * (ybar - spec.mean) ** 2 / kn, 0.0)
    bn = 0.5 * (spec.scale + np.maximum(ss, 0.0) + shrink)
    dof = 2.0 * an
    s2 = bn * (kn + 1.0) / (an * kn)
    return dof, mun, np.sqrt(s2)


def _student_logpdf(y, dof, loc, scale):
    z = (y - loc) / scale
    return (gammaln(0.5 * (dof + 1.0)) - gammaln(0.5 * dof)
            - 0.5 * np.log(dof * np.pi) - np.log(scale)
            - 0.5 * (dof + 1.0) * np.log1p(z * z / dof))


def cluster_assignment_weights(spec, counts, sums, sumsqs, y_i):
    """Unnormalized CRP-collapsed log weights for one observation.

    Returns (log weights for existing clusters, log weight for a new one);
    the existing-cluster weight is log(count) + predictive, the new-cluster
    weight log(concentration) + prior predictive.
    """
    dof, loc, scale = _student_params(spec, counts, sums, sumsqs)
    logw = np.log(np.asarray(counts, dtype=np.float64)) + _student_logpdf(
        y_i, dof, loc, scale)
    dof0, loc0, scale0 = _student_params(spec, 0, 0.0, 0.0)
    log_new = np.log(spec.concentration) + _student_logpdf(
        y_i, dof0, loc0, scale0)
    return logw, float(log_new)


@dataclass(frozen=True)
class DPMState:
    """One recorded Gibbs state: labels plus per-cluster sufficient statistics.

    Clusters are canonicalized (descending count, then sum, then sum of
    squares) so states with relabeled clusters compare bit-equal.
    """

    spec: DPMSpec
    assignments: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    sumsqs: np.ndarray
    iteration: int
    seed: int

    def __post_init__(self):
        z = np.asarray(self.assignments, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.int64)
        sm = np.asarray(self.sums, dtype=np.float64)
        sq = np.asarray(self.sumsqs, dtype=np.float64)
        if cnt.sum() != z.shape[0]:
            raise DataError("cluster counts must sum to n")
        order = np.lexsort((sq, sm, -cnt))
        relabel = np.empty(len(order), dtype=np.int64)
        relabel[order] = np.arange(len(order))
        z = relabel[z]
        for name, arr in (("assignments", z), ("counts", cnt[order]),
                          ("sums", sm[order]), ("sumsqs", sq[order])):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.assignments.shape[0]

    @property
    def n_clusters(self):
        return self.counts.shape[0]


def recompute_stats(state, y):
    """Sufficient statistics recomputed from scratch (consistency oracle)."""
    y = np.asarray(y, dtype=np.float64)
    k = state.n_clusters
    counts = np.bincount(state.assignments, minlength=k)
    sums = np.bincount(state.assignments, weights=y, minlength=k)
    sumsqs = np.bincount(state.assignments, weights=y * y, minlength=k)
    return counts, sums, sumsqs


def dpm_gibbs_fit(spec, y, n_iter=2000, burn_in=500, seed=0, thin=10):
    """Collapsed (marginal) Gibbs sampler, one-cluster initialization.

    Records a canonicalized state every ``thin`` iterations after burn-in.
    """
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)) or y.size < 1:
        raise DataError("response must be finite and nonempty")
    if n_iter <= burn_in:
        raise ConfigError("n_iter must exceed burn_in")
    n = y.size
    rng = np.random.default_rng(seed)

    cap = n + 1
    counts = np.zeros(cap, dtype=np.int64)
    sums = np.zeros(cap)
    sumsqs = np.zeros(cap)
    z = np.zeros(n, dtype=np.int64)
    counts[0], sums[0], sumsqs[0] = n, y.sum(), (y * y).sum()
    k_active = 1

    # count-indexed lookup tables for the pieces that only depend on counts
    cnt_axis = np.arange(n + 1, dtype=np.float64)
    tab_kn = spec.kappa + cnt_axis
    tab_an = 0.5 * (spec.df + cnt_axis)
    tab_dof = 2.0 * tab_an
    tab_gam = gammaln(tab_an + 0.5) - gammaln(tab_an)
    tab_logcnt = np.full(n + 1, -np.inf)
    tab_logcnt[1:] = np.log(cnt_axis[1:])
    log_conc = np.log(spec.concentration)
    half_scale = 0.5 * spec.scale
    km = spec.kappa * spec.mean

    states = []
    uniforms = rng.random((n_iter, n))
    for it in range(n_iter):
        u_row = uniforms[it]
        for i in range(n):
            yi = y[i]
            k_old = z[i]
            counts[k_old] -= 1
            sums[k_old] -= yi
            sumsqs[k_old] -= yi * yi
            if counts[k_old] == 0:
                last = k_active - 1
                if k_old != last:
                    counts[k_old] = counts[last]
                    sums[k_old] = sums[last]
                    sumsqs[k_old] = sumsqs[last]
                    z[z == last] = k_old
                counts[last], sums[last], sumsqs[last] = 0, 0.0, 0.0
                k_active -= 1

            k = k_active
            cnt = counts[:k + 1].copy()
            cnt[k] = 0  # slot for a brand-new cluster
            sm = sums[:k + 1].copy()
            sm[k] = 0.0
            sq = sumsqs[:k + 1].copy()
            sq[k] = 0.0

            kn = tab_kn[cnt]
            mun = (km + sm) / kn
            an = tab_an[cnt]
            ss = sq - np.where(cnt > 0, sm * sm / np.maximum(cnt, 1), 0.0)
            shrink = np.where(
                cnt > 0,
                spec.kappa * cnt * (sm / np.maximum(cnt, 1) - spec.mean) ** 2 / kn,
                0.0)
            bn = half_scale + 0.5 * (np.maximum(ss, 0.0) + shrink)
            dof = tab_dof[cnt]
            s2 = bn * (kn + 1.0) / (an * kn)
            zsc = (yi - mun)
            logpdf = (tab_gam[cnt] - 0.5 * np.log(dof * np.pi * s2)
                      - (an + 0.5) * np.log1p(zsc * zsc / (dof * s2)))
            logw = logpdf + tab_logcnt[cnt]
            logw[k] = logpdf[k] + log_conc

            logw -= logw.max()
            w = np.exp(logw)
            w /= w.sum()
            k_new = int(np.searchsorted(np.cumsum(w), u_row[i], side="right"))
            k_new = min(k_new, k)

            z[i] = k_new
            counts[k_new] += 1
            sums[k_new] += yi
            sumsqs[k_new] += yi * yi
            if k_new == k:
                k_active += 1

        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            states.append(DPMState(
                spec=spec, assignments=z.copy(),
                counts=counts[:k_active].copy(), sums=sums[:k_active].copy(),
                sumsqs=sumsqs[:k_active].copy(), iteration=it, seed=seed))
    return states


def _state_mixture(state):
    """(weights, dof, loc, scale) of the predictive mixture for one state."""
    spec = state.spec
    n = state.n
    c = spec.concentration
    w = np.concatenate([state.counts / (n + c), [c / (n + c)]])
    dof, loc, scale = _student_params(
        spec,
        np.concatenate([state.counts, [0]]),
        np.concatenate([state.sums, [0.0]]),
        np.concatenate([state.sumsqs, [0.0]]))
    return w, dof, loc, scale


def dpm_prior_predictive_density(spec, y):
    """No-data predictive: the base Student-t with ``df`` degrees of freedom."""
    dof, loc, scale = _student_params(spec, 0, 0.0, 0.0)
    return np.exp(_student_logpdf(np.asarray(y, dtype=np.float64), dof, loc,
                                  scale))


def dpm_predictive_density(states, y_grid):
    """State-averaged posterior predictive density on a grid."""
    if not states:
        raise DataError("no posterior states")
    y = np.atleast_1d(np.asarray(y_grid, dtype=np.float64))
    out = np.zeros(y.shape)
    for state in states:
        w, dof, loc, scale = _state_mixture(state)
        pdf = np.exp(_student_logpdf(y[None, :], dof[:, None], loc[:, None],
                                     scale[:, None]))
        out += w @ pdf
    out /= len(states)
    return float(out[0]) if np.isscalar(y_grid) else out


def dpm_predictive_cdf(states, y_grid):
    if not states:
        raise DataError("no posterior states")
    y = np.atleast_1d(np.asarray(y_grid, dtype=np.float64))
    out = np.zeros(y.shape)
    for state in states:
        w, dof, loc, scale = _state_mixture(state)
        t = (y[None, :] - loc[:, None]) / scale[:, None]
        out += w @ stdtr(dof[:, None], t)
    out /= len(states)
    return float(out[0]) if np.isscalar(y_grid) else out


def dpm_predictive_inverse_cdf(states, u, tol=1e-11, max_iter=200):
    """Quantiles of the state-averaged predictive by bracketed bisection."""
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DataError("quantile levels must lie strictly inside (0, 1)")
    locs, scales = [], []
    for state in states:
        _, _, loc, scale = _state_mixture(state)
        locs.append(loc)
        scales.append(scale)
    lo = float(min(np.min(l - 10 * s) for l, s in zip(locs, scales)))
    hi = float(max(np.max(l + 10 * s) for l, s in zip(locs, scales)))
    for _ in range(200):
        if dpm_predictive_cdf(states, lo) < np.min(u):
            break
        lo = hi - 2 * (hi - lo)
    else:
        raise NumericError("failed to bracket lower quantile")
    for _ in range(200):
        if dpm_predictive_cdf(states, hi) > np.max(u):
            break
        hi = lo + 2 * (hi - lo)
    else:
        raise NumericError("failed to bracket upper quantile")
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = dpm_predictive_cdf(states, mid)
        below = fm < u
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
        if np.max(np.abs(fm - u)) < tol and np.max(b - a) < 1e-9 * (hi - lo):
            break
    out = 0.5 * (a + b)
    return float(out[0]) if scalar else out


def dpm_draw_marginal_sample(state, n_draws, seed=0):
    """Sorted draws from one state's predictive mixture (implicit F_Y draw)."""
    if n_draws < 1:
        raise DataError("need at least one draw")
    rng = np.random.default_rng(seed)
    w, dof, loc, scale = _state_mixture(state)
    comp = rng.choice(len(w), size=n_draws, p=w)
    draws = loc[comp] + scale[comp] * rng.standard_t(dof[comp])
    return np.sort(draws)


class DPMMarginal:
    """Marginal-model facade over a list of recorded Gibbs states."""

    def __init__(self, spec, states):
        if not states:
            raise DataError("no posterior states")
        self.spec = spec
        self.states = list(states)
        self.n = states[0].n

    def cdf(self, y):
        return dpm_predictive_cdf(self.states, y)

    def inverse_cdf(self, u):
        return dpm_predictive_inverse_cdf(self.states, u)

    def density(self, y):
        return dpm_predictive_density(self.states, y)

    @property
    def has_density(self):
        return True

    def support(self, eps=1e-6):
        lo = dpm_predictive_inverse_cdf(self.states, eps)
        hi = dpm_predictive_inverse_cdf(self.states, 1.0 - eps)
        return float(lo), float(hi)

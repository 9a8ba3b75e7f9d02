"""Empirical-CDF and Bayesian-bootstrap marginals for the response.

The covariate distribution used by the latent mixture is always the fixed
empirical measure over observed rows; only the response marginal gets the
optional Dirichlet(1,...,1) reweighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, UnsupportedDensityError

FIXED = "fixed"
BOOTSTRAP = "bayesian_bootstrap"


def draw_bootstrap_weights(n, seed=0):
    """One Dirichlet(1,...,1) draw as normalized standard exponentials."""
    if n < 1:
        raise DataError("need n >= 1 weights")
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential(n)
    return e / e.sum()


@dataclass(frozen=True)
class EmpiricalMarginal:
    """Sorted observed responses, optionally carrying one bootstrap weight draw."""

    sorted_values: np.ndarray
    mode: str = FIXED
    weights: np.ndarray | None = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.sorted_values, dtype=np.float64))
        if v.ndim != 1 or v.size < 1 or not np.all(np.isfinite(v)):
            raise DataError("values must be a finite nonempty vector")
        if self.mode not in (FIXED, BOOTSTRAP):
            raise ConfigError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "sorted_values", v)
        if self.mode == BOOTSTRAP:
            w = self.weights
            if w is None:
                raise ConfigError("bootstrap mode needs weights")
            w = np.asarray(w, dtype=np.float64)
            if w.shape != v.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise DataError("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)

    @classmethod
    def fit(cls, y, mode=FIXED, seed=0):
        y = np.asarray(y, dtype=np.float64)
        w = draw_bootstrap_weights(y.size, seed) if mode == BOOTSTRAP else None
        return cls(sorted_values=y, mode=mode, weights=w)

    @property
    def n(self):
        return self.sorted_values.size

    # marginal interface used by the conditional model -------------------
    def cdf(self, y):
        """Right-continuous ECDF (the mean measure, also in bootstrap mode)."""
        y = np.asarray(y, dtype=np.float64)
        return np.searchsorted(self.sorted_values, y, side="right") / self.n

    def inverse_cdf(self, u):
        return ecdf_inverse(self, u)

    def density(self, y):
        raise UnsupportedDensityError(
            "the empirical marginal has no density; use polya-tree or dpm")

    @property
    def has_density(self):
        return False

    def support(self, eps=1e-6):
        v = self.sorted_values
        return float(v[0]), float(v[-1])


def ecdf_inverse(marg, u):
    """Inverse CDF by order statistics.

    Fixed mode returns value number ceil(n*u) (1-indexed); bootstrap mode
    returns the first value whose cumulative weight reaches u. Valid for
    u in (0, 1]; u = 1 gives the maximum.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u > 1.0):
        raise DataError("u must lie in (0, 1]")
    n = marg.n
    if marg.mode == BOOTSTRAP:
        cw = np.cumsum(marg.weights)
        cw[-1] = 1.0  # guard rounding at the top
        idx = np.searchsorted(cw, u, side="left")
    else:
        idx = np.ceil(n * u).astype(np.int64) - 1
    out = marg.sorted_values[np.clip(idx, 0, n - 1)]
    return out if out.ndim else float(out)

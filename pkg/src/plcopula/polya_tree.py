"""Polya tree prior/posterior over the response marginal.

The dyadic partition lives in the mass space of a continuous base
distribution: the node with binary path eps (level m) owns the base-quantile
interval [k 2^-m, (k+1) 2^-m) where k is the integer whose binary expansion is
eps. Observation counts are stored sparsely per level, so a fitted posterior
costs O(n * depth) memory regardless of depth.

Three evaluation modes are provided:

* posterior-mean density / CDF / inverse CDF (analytic, no sampling);
* the recursive inverse-CDF traversal that draws one random measure on the
  fly while descending towards a target quantile;
* a vectorized sampler that draws a fresh random measure per sample, used by
  the posterior-predictive machinery.

Below the truncation depth mass is spread like the base measure restricted to
the leaf, which keeps realizations absolutely continuous.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DataError

_TINY = 1e-300


@dataclass(frozen=True)
class GaussianBase:
    loc: float = 0.0
    scale: float = 1.0
    name = "gaussian"

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError("scale must be positive")

    def cdf(self, y):
        return ndtr((np.asarray(y, dtype=np.float64) - self.loc) / self.scale)

    def ppf(self, u):
        return self.loc + self.scale * ndtri(np.asarray(u, dtype=np.float64))

    def pdf(self, y):
        z = (np.asarray(y, dtype=np.float64) - self.loc) / self.scale
        return np.exp(-0.5 * z * z) / (self.scale * np.sqrt(2 * np.pi))


@dataclass(frozen=True)
class LaplaceBase:
    loc: float = 0.0
    scale: float = 1.0
    name = "laplace"

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError("scale must be positive")

    def cdf(self, y):
        z = (np.asarray(y, dtype=np.float64) - self.loc) / self.scale
        return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.loc - self.scale * np.sign(u - 0.5) * np.log1p(
            -2.0 * np.abs(u - 0.5))

    def pdf(self, y):
        z = (np.asarray(y, dtype=np.float64) - self.loc) / self.scale
        return 0.5 * np.exp(-np.abs(z)) / self.scale


BASE_FAMILIES = {"gaussian": GaussianBase, "laplace": LaplaceBase}


@dataclass(frozen=True)
class PolyaTreeSpec:
    """Base measure, truncation depth and the per-level Beta concentration.

    By default alpha at level m is ``alpha_scale * m**2``; an arbitrary
    ``alpha_schedule`` callable may override it (such a spec cannot be
    serialized).
    """

    base: GaussianBase | LaplaceBase
    depth: int = 12
    alpha_scale: float = 1.0
    alpha_schedule: object = None

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.alpha_schedule is None and self.alpha_scale <= 0:
            raise ConfigError("alpha_scale must be positive")

    def alpha(self, m):
        if self.alpha_schedule is not None:
            a = float(self.alpha_schedule(m))
        else:
            a = self.alpha_scale * m * m
        if a <= 0:
            raise ConfigError(f"alpha at level {m} must be positive")
        return a


class PolyaTreePosterior:
    """Sparse per-level observation counts on top of a PolyaTreeSpec.

    Immutable once built; construct with :func:`pt_update` and extend with
    :func:`pt_merge`.
    """

    def __init__(self, spec, n, levels):
        self.spec = spec
        self.n = int(n)
        self.levels = tuple((np.asarray(k, dtype=np.int64),
                             np.asarray(c, dtype=np.int64))
                            for k, c in levels)
        if len(self.levels) != spec.depth:
            raise DataError("levels must cover 1..depth")
        for keys, counts in self.levels:
            keys.setflags(write=False)
            counts.setflags(write=False)
            if np.any(counts < 0):
                raise DataError("negative count")

    def count(self, m, idx):
        """Observation count in node(s) ``idx`` at level m (0 = root)."""
        idx = np.asarray(idx, dtype=np.int64)
        if m == 0:
            return np.full(idx.shape, self.n, dtype=np.int64)
        keys, counts = self.levels[m - 1]
        pos = np.searchsorted(keys, idx)
        pos_c = np.minimum(pos, len(keys) - 1) if len(keys) else np.zeros_like(pos)
        out = np.zeros(idx.shape, dtype=np.int64)
        if len(keys):
            hit = keys[pos_c] == idx
            out[hit] = counts[pos_c[hit]]
        return out

    # marginal interface used by the conditional model -------------------
    def cdf(self, y):
        return pt_mean_cdf(self, y)

    def inverse_cdf(self, u):
        return pt_mean_inverse_cdf(self, u)

    def density(self, y):
        return pt_mean_density(self, y)

    @property
    def has_density(self):
        return True

    def support(self, eps=1e-6):
        lo = pt_mean_inverse_cdf(self, eps)
        hi = pt_mean_inverse_cdf(self, 1.0 - eps)
        return float(lo), float(hi)


def _mass_coords(spec, y):
    u = np.asarray(spec.base.cdf(y), dtype=np.float64)
    return np.clip(u, _TINY, 1.0 - 1e-16)


def _path_indices(spec, u):
    """Node index of each u at every level 1..depth, shape (depth, len(u))."""
    u = np.atleast_1d(u)
    out = np.empty((spec.depth, u.shape[0]), dtype=np.int64)
    for m in range(1, spec.depth + 1):
        scale = np.int64(1) << m
        idx = np.floor(u * scale).astype(np.int64)
        out[m - 1] = np.minimum(idx, scale - 1)
    return out


def pt_update(spec, y):
    """Route observations down the quantile partition; conjugate count update."""
    y = np.asarray(y, dtype=np.float64)
    if y.size and not np.all(np.isfinite(y)):
        raise DataError("non-finite response entries")
    u = _mass_coords(spec, y) if y.size else np.empty(0)
    paths = _path_indices(spec, u) if y.size else None
    levels = []
    for m in range(1, spec.depth + 1):
        if y.size:
            keys, counts = np.unique(paths[m - 1], return_counts=True)
        else:
            keys, counts = np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        levels.append((keys, counts))
    return PolyaTreePosterior(spec, y.size, levels)


def pt_merge(post, y_extra):
    """New posterior equal to refitting on the union of old and new data."""
    extra = pt_update(post.spec, y_extra)
    levels = []
    for (k1, c1), (k2, c2) in zip(post.levels, extra.levels):
        keys = np.concatenate([k1, k2])
        counts = np.concatenate([c1, c2])
        uk, inv = np.unique(keys, return_inverse=True)
        uc = np.zeros(uk.shape, dtype=np.int64)
        np.add.at(uc, inv, counts)
        levels.append((uk, uc))
    return PolyaTreePosterior(post.spec, post.n + extra.n, levels)


def pt_mean_density(post, y):
    """Posterior-mean density at y (vectorized).

    Per level the base density picks up the factor
    2 (alpha + count(child)) / (2 alpha + count(parent)); with no data the
    factors are all 1 and the base density is returned exactly.
    """
    spec = post.spec
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0
    u = _mass_coords(spec, np.atleast_1d(y))
    paths = _path_indices(spec, u)
    dens = np.asarray(spec.base.pdf(np.atleast_1d(y)), dtype=np.float64).copy()
    parent = np.full(u.shape, post.n, dtype=np.int64)
    for m in range(1, spec.depth + 1):
        a = spec.alpha(m)
        cnt = post.count(m, paths[m - 1])
        dens *= 2.0 * (a + cnt) / (2.0 * a + parent)
        parent = cnt
    return float(dens[0]) if scalar else dens


def pt_mean_cdf(post, y):
    """Posterior-mean CDF at y (vectorized)."""
    spec = post.spec
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0
    u = _mass_coords(spec, np.atleast_1d(y))
    paths = _path_indices(spec, u)
    acc = np.zeros(u.shape)
    mass = np.ones(u.shape)
    parent_idx = np.zeros(u.shape, dtype=np.int64)
    parent_cnt = np.full(u.shape, post.n, dtype=np.int64)
    for m in range(1, spec.depth + 1):
        a = spec.alpha(m)
        idx = paths[m - 1]
        left = parent_idx << 1
        cnt_left = post.count(m, left)
        p_left = (a + cnt_left) / (2.0 * a + parent_cnt)
        right_branch = idx & 1 == 1
        acc = np.where(right_branch, acc + mass * p_left, acc)
        mass = mass * np.where(right_branch, 1.0 - p_left, p_left)
        parent_idx = idx
        parent_cnt = post.count(m, idx)
    frac = u * (np.int64(1) << spec.depth) - paths[-1]
    acc = acc + mass * np.clip(frac, 0.0, 1.0)
    return float(acc[0]) if scalar else acc


def pt_mean_inverse_cdf(post, t):
    """Quantile function of the posterior-mean CDF (exact tree descent)."""
    spec = post.spec
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t).astype(np.float64)
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise DataError("quantile levels must lie strictly inside (0, 1)")
    rem = t.copy()
    idx = np.zeros(t.shape, dtype=np.int64)
    parent_cnt = np.full(t.shape, post.n, dtype=np.int64)
    for m in range(1, spec.depth + 1):
        a = spec.alpha(m)
        left = idx << 1
        cnt_left = post.count(m, left)
        p_left = (a + cnt_left) / (2.0 * a + parent_cnt)
        go_left = rem <= p_left
        rem = np.where(go_left, rem / p_left, (rem - p_left) / (1.0 - p_left))
        rem = np.clip(rem, 0.0, 1.0)
        idx = np.where(go_left, left, left + 1)
        parent_cnt = np.where(go_left, cnt_left, parent_cnt - cnt_left)
    point = (idx + rem) / float(np.int64(1) << spec.depth)
    point = np.clip(point, 1e-16, 1.0 - 1e-16)
    out = post.spec.base.ppf(point)
    return float(out[0]) if scalar else out


def pt_sample_inverse_cdf(post, u, rng_seed=0, theta_draw=None):
    """Inverse CDF under a single random measure drawn on the fly.

    Descends the tree maintaining the random-mass interval [a, b] that
    contains ``u``; at each level a Beta split is drawn from the posterior
    parameters. Splits are derived deterministically from ``rng_seed`` and
    the node address, so two calls with the same seed share the same random
    measure (and are therefore monotone in ``u``). ``theta_draw`` may override
    the split draw (used for diagnostics): called as
    ``theta_draw(level, parent_idx, alpha_left, alpha_right)``.
    """
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DataError("u must lie strictly inside (0, 1)")
    spec = post.spec
    a, b = 0.0, 1.0
    idx = 0  # parent node index
    for m in range(1, spec.depth + 1):
        alpha = spec.alpha(m)
        left = idx << 1
        a_left = alpha + float(post.count(m, np.int64(left))[()])
        a_right = alpha + float(post.count(m, np.int64(left + 1))[()])
        if theta_draw is not None:
            theta = float(theta_draw(m, idx, a_left, a_right))
        else:
            node_rng = np.random.default_rng((int(rng_seed), m, idx))
            theta = float(node_rng.beta(a_left, a_right))
        split = a + theta * (b - a)
        if u <= split:
            b = split
            idx = left
        else:
            a = split
            idx = left + 1
    frac = (u - a) / (b - a) if b > a else 0.5
    point = (idx + frac) / float(np.int64(1) << spec.depth)
    return float(spec.base.ppf(np.clip(point, 1e-16, 1.0 - 1e-16)))


def pt_sample_marginal(post, u, seed=0):
    """Vectorized sampler: one fresh random measure per sample.

    ``u`` is either an array of quantile levels in (0, 1) or an integer count
    (levels are then drawn uniformly). The marginal law of the output is the
    posterior predictive, so the empirical CDF of many samples converges to
    the posterior-mean CDF.
    """
    rng = np.random.default_rng(seed)
    if np.isscalar(u) and isinstance(u, (int, np.integer)):
        u = rng.uniform(size=int(u))
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DataError("u must lie strictly inside (0, 1)")
    spec = post.spec
    a = np.zeros(u.shape)
    b = np.ones(u.shape)
    idx = np.zeros(u.shape, dtype=np.int64)
    for m in range(1, spec.depth + 1):
        alpha = spec.alpha(m)
        left = idx << 1
        a_left = alpha + post.count(m, left)
        a_right = alpha + post.count(m, left + 1)
        theta = rng.beta(a_left, a_right)
        split = a + theta * (b - a)
        go_left = u <= split
        b = np.where(go_left, split, b)
        a = np.where(go_left, a, split)
        idx = np.where(go_left, left, left + 1)
    width = b - a
    frac = np.where(width > 0, (u - a) / np.where(width > 0, width, 1.0), 0.5)
    point = (idx + frac) / float(np.int64(1) << spec.depth)
    return spec.base.ppf(np.clip(point, 1e-16, 1.0 - 1e-16))


# ---------------------------------------------------------------------------
# plain-text serialization: header lines with the tree parameters, then
# one `path,count` line per visited node

def write_polya_tree(fh, post):
    close = False
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        fh = open(fh, "w")
        close = True
    try:
        spec = post.spec
        if spec.alpha_schedule is not None:
            raise ConfigError("a custom alpha_schedule cannot be serialized")
        fh.write("polya-tree-posterior: v1\n")
        fh.write(f"base: {spec.base.name} loc={spec.base.loc!r} "
                 f"scale={spec.base.scale!r}\n")
        fh.write(f"alpha_scale: {spec.alpha_scale!r}\n")
        fh.write(f"depth: {spec.depth}\n")
        fh.write(f"n: {post.n}\n")
        for m, (keys, counts) in enumerate(post.levels, start=1):
            for k, c in zip(keys.tolist(), counts.tolist()):
                fh.write(f"{k:0{m}b},{c}\n")
    finally:
        if close:
            fh.close()


def read_polya_tree(fh):
    close = False
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        fh = open(fh)
        close = True
    try:
        header = {}
        paths = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if ":" in line and "," not in line:
                key, value = line.split(":", 1)
                header[key.strip()] = value.strip()
            else:
                path, count = line.split(",")
                paths.append((path, int(count)))
        if header.get("polya-tree-posterior") != "v1":
            raise DataError("not a polya-tree posterior file")
        base_parts = header["base"].split()
        family = BASE_FAMILIES[base_parts[0]]
        opts = dict(p.split("=", 1) for p in base_parts[1:])
        base = family(loc=float(opts["loc"]), scale=float(opts["scale"]))
        spec = PolyaTreeSpec(base=base, depth=int(header["depth"]),
                             alpha_scale=float(header["alpha_scale"]))
        per_level = {m: ([], []) for m in range(1, spec.depth + 1)}
        for path, count in paths:
            ks, cs = per_level[len(path)]
            ks.append(int(path, 2))
            cs.append(count)
        levels = []
        for m in range(1, spec.depth + 1):
            ks, cs = per_level[m]
            order = np.argsort(ks) if ks else []
            levels.append((np.asarray(ks, dtype=np.int64)[order],
                           np.asarray(cs, dtype=np.int64)[order]))
        return PolyaTreePosterior(spec, int(header["n"]), levels)
    finally:
        if close:
            fh.close()


def polya_tree_to_text(post):
    buf = io.StringIO()
    write_polya_tree(buf, post)
    return buf.getvalue()


def polya_tree_from_text(text):
    return read_polya_tree(io.StringIO(text))

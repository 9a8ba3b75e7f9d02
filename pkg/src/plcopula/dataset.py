"""Dataset container, response ordering with a recorded tie policy, and
design-matrix encoding from raw tabular records.

Exact response ties are broken uniformly at random under a recorded seed,
which keeps the exact ranking likelihood valid for the realized order;
averaged tie corrections in the likelihood itself are out of scope. The
encoded dataset and the ordering are immutable after construction and can be
shared freely across workers.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UnknownLevelError


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RegressionDataset:
    """Encoded covariate matrix ``x`` (n rows, p columns) with responses ``y``.

    ``feature_names`` labels the p encoded columns; ``baseline_map`` records,
    for every categorical source column, the level absorbed into the
    intercept-free encoding.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple
    baseline_map: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DataError(f"incompatible shapes x{x.shape}, y{y.shape}")
        if x.shape[0] < 2:
            raise DataError("need at least 2 rows")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite covariate entries")
        if not np.all(np.isfinite(y)):
            raise DataError("non-finite response entries")
        names = tuple(str(f) for f in self.feature_names)
        if len(names) != x.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {x.shape[1]} columns")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class OrderIndex:
    """Permutation ``nu`` putting the responses in ascending order.

    Exact ties are broken uniformly at random using ``tie_seed``; the position
    ranges of the tied runs (half-open, into the sorted order) are kept in
    ``tie_groups`` so the policy is auditable.
    """

    nu: np.ndarray
    tie_seed: int
    tie_groups: tuple

    def __post_init__(self):
        object.__setattr__(self, "nu", _readonly(np.asarray(self.nu, dtype=np.int64)))

    @property
    def n(self):
        return self.nu.shape[0]


def build_order(y, tie_seed=0):
    """Sort the responses ascending, shuffling exactly-equal runs with ``tie_seed``.

    Returns an :class:`OrderIndex`. The base sort is stable, so for distinct
    values the permutation is the unique ascending order.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 2:
        raise DataError("response must be a vector of length >= 2")
    if not np.all(np.isfinite(y)):
        raise DataError("non-finite response entries")
    nu = np.argsort(y, kind="stable")
    ys = y[nu]
    # boundaries of maximal runs of exactly equal values
    breaks = np.flatnonzero(ys[1:] != ys[:-1]) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [len(ys)]))
    groups = []
    rng = np.random.default_rng(tie_seed)
    nu = nu.copy()
    for s, e in zip(starts, stops):
        if e - s > 1:
            nu[s:e] = nu[s:e][rng.permutation(e - s)]
            groups.append((int(s), int(e)))
    return OrderIndex(nu=nu, tie_seed=int(tie_seed), tie_groups=tuple(groups))


def check_order(dataset, order):
    """Structural consistency of an order with a dataset (cheap checks only)."""
    if order.n != dataset.n:
        raise DataError(
            f"order length {order.n} does not match dataset rows {dataset.n}")


# ---------------------------------------------------------------------------
# schema + design encoding

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass
class ColumnSpec:
    name: str
    kind: str
    baseline: str | None = None
    # filled when the schema is fitted
    levels: tuple | None = None
    mean: float | None = None
    sd: float | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL and self.baseline is None:
            raise DataError(f"categorical column {self.name!r} needs a baseline")


@dataclass
class TableSchema:
    """Declares the response column and the kind of every covariate column.

    The first :func:`encode_design` call fits the schema in place (categorical
    levels, standardization statistics, dropped constant columns), so
    re-encoding new records reproduces the same column layout.
    """

    response: str
    columns: list
    standardize: bool = False
    fitted: bool = False

    def expected_width(self):
        """Encoded column count implied by the fitted schema."""
        w = 0
        for c in self.columns:
            w += len(c.levels) if c.kind == CATEGORICAL else (0 if c.levels == () else 1)
        return w


def _columns_from_records(raw):
    if isinstance(raw, dict):
        return {k: np.asarray(v) for k, v in raw.items()}
    # list of per-row dicts
    rows = list(raw)
    if not rows:
        raise DataError("no records to encode")
    keys = rows[0].keys()
    return {k: np.asarray([r[k] for r in rows]) for k in keys}


def encode_design(raw, schema):
    """Encode raw tabular records into a :class:`RegressionDataset`.

    Categorical columns become indicator columns for every non-baseline level;
    numeric columns pass through (optionally standardized to mean 0, sd 1,
    with the statistics recorded on the schema for back-transformation).
    The first call fits the schema in place; later calls reuse the fitted
    layout and reject unseen categorical levels.

    Constant numeric columns are dropped with a warning.
    """
    cols = _columns_from_records(raw)
    if schema.response not in cols:
        raise DataError(f"response column {schema.response!r} missing")
    x, names, baseline_map = _encode_matrix(cols, schema)
    try:
        y = np.asarray(cols[schema.response], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"response is not numeric: {e}") from None
    return RegressionDataset(x=x, y=y, feature_names=names,
                             baseline_map=baseline_map)


def encode_rows(raw, schema):
    """Encode covariate-only records with an already fitted schema.

    Used at predict time; accepts any number of rows (including one) and
    returns the bare design matrix.
    """
    if not schema.fitted:
        raise DataError("schema must be fitted (run encode_design on training data)")
    cols = _columns_from_records(raw)
    x, _, _ = _encode_matrix(cols, schema)
    return x


def _encode_matrix(cols, schema):
    fitting = not schema.fitted

    n = None
    blocks = []
    names = []
    baseline_map = {}
    for spec in schema.columns:
        if spec.name not in cols:
            raise DataError(f"column {spec.name!r} missing from data")
        col = cols[spec.name]
        if n is None:
            n = len(col)
        elif len(col) != n:
            raise DataError(f"column {spec.name!r} has length {len(col)}, expected {n}")

        if spec.kind == NUMERIC:
            try:
                v = np.asarray(col, dtype=np.float64)
            except ValueError as e:
                raise DataError(f"column {spec.name!r} is not numeric: {e}") from None
            if not np.all(np.isfinite(v)):
                raise DataError(f"non-finite values in column {spec.name!r}")
            if fitting:
                sd = float(v.std())
                if sd == 0.0:
                    warnings.warn(f"column {spec.name!r} is constant; dropped")
                    spec.levels = ()  # marks a dropped numeric column
                    continue
                if schema.standardize:
                    spec.mean, spec.sd = float(v.mean()), sd
            if spec.levels == ():
                continue
            if schema.standardize:
                v = (v - spec.mean) / spec.sd
            blocks.append(v[:, None])
            names.append(spec.name)
        else:
            svals = col.astype(str)
            if fitting:
                levels = [l for l in np.unique(svals).tolist() if l != spec.baseline]
                if not levels:
                    warnings.warn(
                        f"categorical column {spec.name!r} has only the baseline level")
                spec.levels = tuple(levels)
            else:
                seen = np.unique(svals)
                known = set(spec.levels) | {spec.baseline}
                for l in seen.tolist():
                    if l not in known:
                        raise UnknownLevelError(spec.name, l)
            if spec.levels:
                # integer codes once, then cheap comparisons per level
                level_arr = np.asarray(spec.levels)
                codes = np.searchsorted(np.sort(level_arr), svals)
                order = np.argsort(level_arr, kind="stable")
                ind = np.zeros((n, len(spec.levels)), dtype=np.float64)
                sorted_levels = level_arr[order]
                valid = (codes < len(sorted_levels))
                match = np.zeros(n, dtype=bool)
                match[valid] = sorted_levels[codes[valid]] == svals[valid]
                rows = np.flatnonzero(match)
                ind[rows, order[codes[rows]]] = 1.0
                blocks.append(ind)
                names.extend(f"{spec.name}={l}" for l in spec.levels)
            baseline_map[spec.name] = spec.baseline

    if not blocks:
        raise DataError("schema produced an empty design matrix")
    x = np.concatenate(blocks, axis=1)
    schema.fitted = True
    return x, names, baseline_map


def destandardize(schema, name, value):
    """Map a standardized numeric value back to the raw scale."""
    for c in schema.columns:
        if c.name == name and c.kind == NUMERIC:
            if c.mean is None:
                return value
            return value * c.sd + c.mean
    raise DataError(f"no numeric column {name!r}")


# ---------------------------------------------------------------------------
# plain-text external formats: CSV with a header row, and a `key: value`
# schema file naming the response, the column kinds, and the baselines.

def read_csv_columns(path):
    """Read a headered CSV into a dict of column-name -> string array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    cols = {}
    data = np.asarray(rows, dtype=object)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    for j, name in enumerate(header):
        cols[name] = data[:, j].astype(str)
    return cols


def write_csv_columns(path, cols, order=None):
    names = list(order) if order is not None else list(cols)
    n = len(next(iter(cols.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([cols[name][i] for name in names])


def read_schema(path):
    """Parse a `key: value` schema file.

    Reserved keys: ``response`` and ``standardize``. Every other line declares
    a column, e.g.::

        response: income
        age: numeric
        state: categorical baseline=texas
    """
    response = None
    standardize = False
    fitted = False
    columns = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key: value'")
            key, value = line.split(":", 1)
            key, value = key.strip(), value.strip()
            if key == "response":
                response = value
            elif key == "standardize":
                standardize = value.lower() in ("1", "true", "yes", "on")
            elif key == "fitted":
                fitted = value.lower() in ("1", "true", "yes", "on")
            else:
                parts = value.split()
                kind = parts[0]
                opts = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
                baseline = opts.get("baseline")
                levels = tuple(opts["levels"].split("|")) if "levels" in opts else None
                if levels == ("",):
                    levels = ()
                spec = ColumnSpec(name=key, kind=kind, baseline=baseline, levels=levels)
                if "mean" in opts:
                    spec.mean, spec.sd = float(opts["mean"]), float(opts["sd"])
                columns.append(spec)
    if response is None:
        raise DataError(f"{path}: missing 'response:' line")
    if not columns:
        raise DataError(f"{path}: no columns declared")
    fitted = fitted or any(c.levels is not None for c in columns)
    return TableSchema(response=response, columns=columns,
                       standardize=standardize, fitted=fitted)


def write_schema(path, schema):
    with open(path, "w") as fh:
        fh.write(f"response: {schema.response}\n")
        if schema.standardize:
            fh.write("standardize: true\n")
        if schema.fitted:
            fh.write("fitted: true\n")
        for c in schema.columns:
            if c.kind == NUMERIC:
                line = f"{c.name}: numeric"
                if schema.fitted and c.levels == ():
                    line += " levels="  # dropped constant column
                if c.mean is not None:
                    line += f" mean={c.mean!r} sd={c.sd!r}"
                fh.write(line + "\n")
            else:
                line = f"{c.name}: categorical baseline={c.baseline}"
                if c.levels is not None:
                    line += " levels=" + "|".join(c.levels)
                fh.write(line + "\n")

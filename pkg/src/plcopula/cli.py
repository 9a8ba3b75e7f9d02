"""Command-line front end.

Subcommands: fit, predict, diagnose, simulate, rank. Every flag has a
config-file counterpart (flat ``key=value`` lines, ``#`` comments; keys are
the flag names without the leading dashes); command-line flags win. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .conditional import DPMFitSpec, fit_composite, load_model, save_model
from .dataset import (encode_design, encode_rows, read_csv_columns,
                      read_schema)
from .dpm import DPMSpec
from .errors import ConfigError, DataError, NumericError, PLCopulaError
from .plackett_luce import GaussianPrior, mh_refine, rank_coefficients
from .polya_tree import BASE_FAMILIES, PolyaTreeSpec
from .predictive import (PosteriorConditional, hpd_region, ks_uniform,
                         pit_values, predict_draws)
from .simulate import (gen_census_like, gen_linear_gaussian, gen_mixture3,
                       write_dataset_files)

MARGINAL_CHOICES = ("ecdf", "bootstrap", "polya-tree", "dpm")


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags win")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", default=None, help="output directory")


def _add_fit_options(p):
    p.add_argument("--data", default=None, help="training CSV")
    p.add_argument("--schema", default=None, help="schema file")
    p.add_argument("--marginal", choices=MARGINAL_CHOICES, default=None)
    p.add_argument("--pt-base", choices=tuple(BASE_FAMILIES), default=None)
    p.add_argument("--pt-mean", type=float, default=None)
    p.add_argument("--pt-sd", type=float, default=None)
    p.add_argument("--pt-depth", type=int, default=None)
    p.add_argument("--pt-alpha-scale", type=float, default=None)
    p.add_argument("--dpm-conc", type=float, default=None)
    p.add_argument("--dpm-mean", type=float, default=None)
    p.add_argument("--dpm-kappa", type=float, default=None)
    p.add_argument("--dpm-df", type=float, default=None)
    p.add_argument("--dpm-scale", type=float, default=None)
    p.add_argument("--dpm-iters", type=int, default=None)
    p.add_argument("--dpm-burnin", type=int, default=None)
    p.add_argument("--dpm-thin", type=int, default=None)
    p.add_argument("--prior-mean", type=float, default=None)
    p.add_argument("--prior-var", type=float, default=None)
    p.add_argument("--mh-samples", type=int, default=None,
                   help="optional Metropolis refinement sample count")
    p.add_argument("--tol", type=float, default=None,
                   help="gradient tolerance for the MAP fit")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plcopula",
        description="Rank-based nonparametric regression: composite fits, "
                    "predictive distributions, calibration diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from CSV + schema")
    _add_common(p_fit)
    _add_fit_options(p_fit)

    p_pred = sub.add_parser("predict", help="predictive draws/HPD/density")
    _add_common(p_pred)
    p_pred.add_argument("--model", default=None, help="fitted model file")
    p_pred.add_argument("--x", default=None, help="CSV of covariate rows")
    p_pred.add_argument("--draws", type=int, default=None)
    p_pred.add_argument("--scheme", default=None,
                        choices=("ecdf", "bootstrap", "polya-tree", "dpm"))
    p_pred.add_argument("--hpd-level", type=float, default=None)
    p_pred.add_argument("--beta-draws", type=int, default=None)
    p_pred.add_argument("--grid-size", type=int, default=None)

    p_diag = sub.add_parser("diagnose", help="held-out calibration and errors")
    _add_common(p_diag)
    p_diag.add_argument("--model", default=None)
    p_diag.add_argument("--heldout", default=None, help="held-out CSV")
    p_diag.add_argument("--draws", type=int, default=None)
    p_diag.add_argument("--beta-draws", type=int, default=None)
    p_diag.add_argument("--baseline-train", default=None,
                        help="training CSV for a least-squares baseline")

    p_sim = sub.add_parser("simulate", help="write synthetic CSV + schema")
    _add_common(p_sim)
    p_sim.add_argument("--experiment", default=None,
                       choices=("mixture3", "linear-gaussian", "census-like"))
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--beta", type=float, default=None)
    p_sim.add_argument("--schema-seed", type=int, default=None)

    p_rank = sub.add_parser("rank", help="covariates ranked by sign evidence")
    _add_common(p_rank)
    p_rank.add_argument("--model", default=None)
    return parser


DEFAULTS = {
    "seed": 0,
    "out": "plcopula-out",
    "marginal": "polya-tree",
    "pt_base": "gaussian",
    "pt_depth": 12,
    "pt_alpha_scale": 1.0,
    "dpm_conc": 1.0,
    "dpm_kappa": 0.5,
    "dpm_df": 4.0,
    "dpm_iters": 2000,
    "dpm_burnin": 500,
    "dpm_thin": 10,
    "prior_mean": 0.0,
    "prior_var": 1.0,
    "tol": 1e-8,
    "draws": 2000,
    "beta_draws": 64,
    "hpd_level": 0.8,
    "grid_size": 4096,  # resolves the staircase of deep-tree densities
    "n": 500,
    "beta": 0.25,
    "schema_seed": 0,
    "experiment": "mixture3",
}

_CONVERTERS = {
    "seed": int, "pt_depth": int, "dpm_iters": int, "dpm_burnin": int,
    "dpm_thin": int, "mh_samples": int, "draws": int, "beta_draws": int,
    "grid_size": int, "n": int, "schema_seed": int,
    "pt_mean": float, "pt_sd": float, "pt_alpha_scale": float,
    "dpm_conc": float, "dpm_mean": float, "dpm_kappa": float,
    "dpm_df": float, "dpm_scale": float, "prior_mean": float,
    "prior_var": float, "tol": float, "hpd_level": float, "beta": float,
}


def _read_config(path):
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return values


def _merge_config(args):
    if getattr(args, "config", None):
        for key, raw in _read_config(args.config).items():
            if not hasattr(args, key):
                continue
            if getattr(args, key) is None:  # flags win over the config file
                conv = _CONVERTERS.get(key, str)
                try:
                    setattr(args, key, conv(raw))
                except ValueError as e:
                    raise ConfigError(f"config value {key}={raw!r}: {e}") \
                        from None
    for key, value in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def _load_dataset(args):
    _require(args, "data", "schema")
    schema = read_schema(args.schema)
    cols = read_csv_columns(args.data)
    return encode_design(cols, schema), schema


def _atomic_writer(path):
    tmp = f"{path}.tmp"
    return tmp, lambda: os.replace(tmp, path)


def _write_rows(path, header, rows):
    tmp, done = _atomic_writer(path)
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    done()


def _marginal_spec_from_args(args, y):
    if args.marginal == "ecdf":
        return "ecdf"
    if args.marginal == "bootstrap":
        return "bootstrap"
    if args.marginal == "polya-tree":
        base_cls = BASE_FAMILIES[args.pt_base]
        loc = args.pt_mean if args.pt_mean is not None else float(np.mean(y))
        scale = args.pt_sd if args.pt_sd is not None else float(np.std(y))
        return PolyaTreeSpec(base=base_cls(loc=loc, scale=scale),
                             depth=args.pt_depth,
                             alpha_scale=args.pt_alpha_scale)
    if args.marginal == "dpm":
        mean = args.dpm_mean if args.dpm_mean is not None else float(np.mean(y))
        scale = args.dpm_scale if args.dpm_scale is not None \
            else float(np.var(y)) / 4.0
        spec = DPMSpec(concentration=args.dpm_conc, mean=mean,
                       kappa=args.dpm_kappa, df=args.dpm_df, scale=scale)
        return DPMFitSpec(spec=spec, n_iter=args.dpm_iters,
                          burn_in=args.dpm_burnin, thin=args.dpm_thin)
    raise ConfigError(f"unknown marginal {args.marginal!r}")


def cmd_fit(args):
    data, schema = _load_dataset(args)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.monotonic()
    marginal_spec = _marginal_spec_from_args(args, data.y)
    prior = GaussianPrior(mean=args.prior_mean, var=args.prior_var)
    model = fit_composite(data, marginal_spec, prior, seed=args.seed,
                          schema=schema, tol=args.tol)
    if args.mh_samples:
        from .dataset import build_order
        order = build_order(data.y, tie_seed=args.seed)
        refined = mh_refine(model.pl, data, order, n_samples=args.mh_samples,
                            seed=args.seed)
        model.pl = refined
    elapsed = time.monotonic() - t0

    model_path = os.path.join(args.out, "model.json")
    save_model(model_path, model)

    ranked = rank_coefficients(model.pl, model.feature_names)
    sds = np.sqrt(np.diag(model.pl.laplace_cov))
    sd_by_name = dict(zip(model.feature_names, sds))
    _write_rows(os.path.join(args.out, "fit_report.csv"),
                ["feature", "posterior_mean", "posterior_sd",
                 "log_prob_different_sign"],
                ((name, repr(mu), repr(float(sd_by_name[name])), repr(lp))
                 for name, lp, mu in ranked))

    report_path = os.path.join(args.out, "fit_report.txt")
    tmp, done = _atomic_writer(report_path)
    with open(tmp, "w") as fh:
        fh.write(f"rows: {data.n}\ncolumns: {data.p}\n")
        fh.write(f"marginal: {model.marginal_kind}\n")
        for key, value in sorted(model.rate_summary().items()):
            fh.write(f"{key}: {value}\n")
        fh.write(f"newton_iterations: {model.pl.n_iter}\n")
        fh.write(f"gradient_norm: {model.pl.grad_norm:.3e}\n")
        if model.pl.mh_acceptance is not None:
            fh.write(f"mh_acceptance: {model.pl.mh_acceptance:.3f}\n")
        fh.write(f"fit_seconds: {elapsed:.2f}\n")
        fh.write(f"model_file: {model_path}\n")
    done()
    print(f"fit: {data.n} rows, {data.p} columns -> {model_path} "
          f"({elapsed:.1f}s)")
    return 0


def _encode_new_rows(model, path):
    cols = read_csv_columns(path)
    if model.schema is None:
        raise ConfigError("model carries no schema; cannot encode raw rows")
    if model.schema.response in cols:
        cols = {k: v for k, v in cols.items() if k != model.schema.response}
    return encode_rows(cols, model.schema)


def cmd_predict(args):
    _require(args, "model", "x")
    model = load_model(args.model)
    x = _encode_new_rows(model, args.x)
    if x.shape[0] == 0:
        raise DataError("no covariate rows to predict")
    os.makedirs(args.out, exist_ok=True)
    scheme = args.scheme.replace("-", "_") if args.scheme else None

    draw_rows = []
    hpd_rows = []
    density_rows = []
    cond = None
    if getattr(model.marginal, "has_density", False):
        cond = PosteriorConditional(model, n_beta_draws=args.beta_draws,
                                    grid_size=args.grid_size, seed=args.seed)
    for r, row in enumerate(x):
        draws = predict_draws(model, row, m=args.draws, scheme=scheme,
                              seed=(args.seed, r))
        draw_rows.extend((r, j, repr(float(v)))
                         for j, v in enumerate(draws.samples))
        if cond is not None:
            region = hpd_region(model, row, level=args.hpd_level, cond=cond)
            hpd_rows.extend((r, repr(lo), repr(hi), repr(region.level))
                            for lo, hi in region.intervals)
            dens = cond.density(row)
            density_rows.extend(
                (r, repr(float(yv)), repr(float(dv)))
                for yv, dv in zip(cond.y_grid, dens))
        else:
            qs = np.quantile(draws.samples,
                             [0.5 * (1 - args.hpd_level),
                              1 - 0.5 * (1 - args.hpd_level)])
            hpd_rows.append((r, repr(float(qs[0])), repr(float(qs[1])),
                             repr(args.hpd_level)))
    _write_rows(os.path.join(args.out, "draws.csv"), ["row", "j", "y"],
                draw_rows)
    _write_rows(os.path.join(args.out, "hpd.csv"),
                ["row", "lo", "hi", "level"], hpd_rows)
    if density_rows:
        _write_rows(os.path.join(args.out, "density.csv"),
                    ["row", "y", "density"], density_rows)
    print(f"predict: {x.shape[0]} rows x {args.draws} draws -> {args.out}")
    return 0


def _ols_baseline(train_csv, model, x_test, y_test):
    cols = read_csv_columns(train_csv)
    ds = encode_design(cols, model.schema)
    xt = np.column_stack([np.ones(ds.n), ds.x])
    coef, *_ = np.linalg.lstsq(xt, ds.y, rcond=None)
    resid = ds.y - xt @ coef
    sigma = float(np.std(resid))
    pred = np.column_stack([np.ones(x_test.shape[0]), x_test]) @ coef
    from scipy.special import ndtr
    pit = np.sort(ndtr((y_test - pred) / sigma))
    return {
        "baseline_mse": float(np.mean((y_test - pred) ** 2)),
        "baseline_mae": float(np.mean(np.abs(y_test - pred))),
        "baseline_pit_ks": ks_uniform(pit),
    }


def cmd_diagnose(args):
    _require(args, "model", "heldout")
    model = load_model(args.model)
    cols = read_csv_columns(args.heldout)
    if model.schema is None:
        raise ConfigError("model carries no schema; cannot encode raw rows")
    if model.schema.response not in cols:
        raise DataError(
            f"held-out file lacks response column {model.schema.response!r}")
    y = np.asarray(cols[model.schema.response], dtype=np.float64)
    x = encode_rows({k: v for k, v in cols.items()
                     if k != model.schema.response}, model.schema)
    os.makedirs(args.out, exist_ok=True)

    means = np.empty(x.shape[0])
    medians = np.empty(x.shape[0])
    for r, row in enumerate(x):
        draws = predict_draws(model, row, m=args.draws, seed=(args.seed, r))
        means[r] = draws.samples.mean()
        medians[r] = float(np.median(draws.samples))
    pit, mq = pit_values(model, x, y, n_beta_draws=args.beta_draws,
                         seed=args.seed)
    metrics = {
        "n_heldout": int(x.shape[0]),
        "mse_mean": float(np.mean((y - means) ** 2)),
        "mae_median": float(np.mean(np.abs(y - medians))),
        "pit_ks": ks_uniform(pit),
    }
    if args.baseline_train:
        metrics.update(_ols_baseline(args.baseline_train, model, x, y))

    _write_rows(os.path.join(args.out, "pit.csv"), ["uniform_q", "pit"],
                ((repr(float(q)), repr(float(p))) for q, p in zip(mq, pit)))
    _write_rows(os.path.join(args.out, "metrics.csv"), ["metric", "value"],
                ((k, repr(v)) for k, v in sorted(metrics.items())))
    tmp, done = _atomic_writer(os.path.join(args.out, "diagnose.txt"))
    with open(tmp, "w") as fh:
        for k, v in sorted(metrics.items()):
            fh.write(f"{k}: {v}\n")
    done()
    print("diagnose:", " ".join(f"{k}={v:.6g}" if isinstance(v, float)
                                else f"{k}={v}"
                                for k, v in sorted(metrics.items())))
    return 0


def cmd_simulate(args):
    os.makedirs(args.out, exist_ok=True)
    if args.experiment == "mixture3":
        data = gen_mixture3(n=args.n, beta=args.beta, seed=args.seed)
        raw = {"y": data.y, "x0": data.x[:, 0]}
        from .dataset import ColumnSpec, TableSchema
        schema = TableSchema(response="y",
                             columns=[ColumnSpec(name="x0", kind="numeric")])
        csv_path, schema_path = write_dataset_files(args.out, raw, schema)
    elif args.experiment == "linear-gaussian":
        data = gen_linear_gaussian(n=args.n, seed=args.seed)
        raw = {"y": data.y, "x0": data.x[:, 0]}
        from .dataset import ColumnSpec, TableSchema
        schema = TableSchema(response="y",
                             columns=[ColumnSpec(name="x0", kind="numeric")])
        csv_path, schema_path = write_dataset_files(args.out, raw, schema)
    else:
        out = gen_census_like(n=args.n, schema_seed=args.schema_seed,
                              seed=args.seed)
        csv_path, schema_path = write_dataset_files(args.out, out.raw,
                                                    out.schema)
        truth_path = os.path.join(args.out, "truth.json")
        tmp, done = _atomic_writer(truth_path)
        with open(tmp, "w") as fh:
            json.dump({"beta_true": dict(zip(out.dataset.feature_names,
                                             out.beta_true.tolist())),
                       "strong_effects": out.strong_effects}, fh, indent=1)
        done()
    print(f"simulate: {args.experiment} n={args.n} -> {csv_path}, "
          f"{schema_path}")
    return 0


def cmd_rank(args):
    _require(args, "model")
    model = load_model(args.model)
    os.makedirs(args.out, exist_ok=True)
    ranked = rank_coefficients(model.pl, model.feature_names)
    _write_rows(os.path.join(args.out, "rank.csv"),
                ["feature", "log_prob_different_sign", "posterior_mean"],
                ((name, repr(lp), repr(mu)) for name, lp, mu in ranked))
    for name, lp, mu in ranked[:15]:
        print(f"{name:<42s} {lp:14.4g} {mu:10.4g}")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
    "rank": cmd_rank,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return COMMANDS[args.command](args)
    except (ConfigError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (NumericError, np.linalg.LinAlgError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except PLCopulaError as e:  # pragma: no cover - catch-all for subclasses
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Commands: ``fit``, ``simulate``, ``intervals``, ``predict``, ``loglik``,
``export-corr``.  Exit codes are a stable contract: 0 success, 2 usage
error, 3 data error, 4 numeric failure.  The environment variable
``FAMA_THREADS`` caps worker threads (default 1); outputs are
deterministic functions of the inputs, flags, and seed.
"""

import argparse
import csv
import logging
import sys
from configparser import ConfigParser

import numpy as np

from .errors import FamaError, UsageError
from .covariance import conditional_prediction, gaussian_loglik, point_estimates
from .estimator import fit_views
from .intervals import interval_matrix, write_intervals_csv
from .preprocess import PreprocessSpec, fit_preprocess, load_views
from .simulate import read_sim_config, report_to_csv, run_experiment
from .types import load_artifact, save_artifact

logger = logging.getLogger("fama")


def export_correlations(fit, m, m_prime=None, threshold_by_interval=False,
                        alpha=0.05):
    """Correlation-scale covariance block of a fit.

    Entries divide the covariance estimate by the square roots of the
    intra-view diagonals (low-rank plus residual noise).  With
    thresholding on, entries whose posterior-approximation interval for
    the low-rank component contains zero are set to zero; the intra-view
    diagonal is pinned to exactly 1.
    """
    blocks = point_estimates(fit)
    intra = m_prime is None or m_prime == m
    lam_a = blocks.loadings[m]
    diag_a = np.sum(lam_a * lam_a, axis=1) + blocks.noise[m]
    if intra:
        cov = blocks.intra_dense(m)
        cov = 0.5 * (cov + cov.T)  # exact symmetry for the export
        diag_b = diag_a
        m_prime = m
    else:
        cov = blocks.inter_dense(m, m_prime)
        lam_b = blocks.loadings[m_prime]
        diag_b = np.sum(lam_b * lam_b, axis=1) + blocks.noise[m_prime]
    corr = cov / np.sqrt(np.outer(diag_a, diag_b))
    if threshold_by_interval:
        mat = interval_matrix(fit, m, m_prime, alpha, "bvm")
        zero_in = (mat.lo <= 0.0) & (0.0 <= mat.hi)
        corr = np.where(zero_in, 0.0, corr)
    if intra:
        corr[np.arange(corr.shape[0]), np.arange(corr.shape[0])] = 1.0
    return corr


def _write_matrix_csv(path, matrix):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow(["%.17g" % v for v in row])


def _parse_index_spec(spec, limit):
    if spec is None:
        return None
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        lo = int(lo) if lo else 0
        hi = int(hi) if hi else limit
        return list(range(lo, hi))
    return [int(v) for v in spec.split(",") if v.strip()]


def _parse_int_list(spec):
    return [int(v) for v in spec.split(",") if v.strip()]


def _add_csv_args(parser):
    parser.add_argument("--delimiter", default=",")
    parser.add_argument("--header", action="store_true",
                        help="first row of each CSV holds column names")


# Fit settings an INI config may provide; command line flags win.
_FIT_DEFAULTS = {
    "delimiter": ",", "header": False, "preprocess": "none", "out": None,
    "k0": None, "km": None, "k_max": None, "k0_max": None,
    "nu0": 1.0, "sigma0_sq": 1.0, "rho_mode": "mean",
    "exact_pair_count": False, "seed": 0,
}
_FIT_INT_KEYS = {"k0", "k_max", "k0_max", "seed"}
_FIT_FLOAT_KEYS = {"nu0", "sigma0_sq"}
_FIT_BOOL_KEYS = {"header", "exact_pair_count"}


def read_fit_config(path):
    """Parse a fit scenario: a global key=value section plus one
    ``[view <name>]`` section per view carrying its ``path``."""
    parser = ConfigParser()
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[fit]\n" + text
    parser.read_string(text)
    settings, views = {}, []
    for section in parser.sections():
        if section.lower().startswith("view"):
            if "path" not in parser[section]:
                raise UsageError(f"section [{section}] is missing 'path'")
            views.append(parser[section]["path"])
            continue
        for key, raw in parser[section].items():
            if key not in _FIT_DEFAULTS:
                raise UsageError(f"unknown fit config key {key!r}")
            if key in _FIT_INT_KEYS:
                settings[key] = int(raw)
            elif key in _FIT_FLOAT_KEYS:
                settings[key] = float(raw)
            elif key in _FIT_BOOL_KEYS:
                settings[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                settings[key] = raw
    return settings, views


def _cmd_fit(args):
    settings = dict(_FIT_DEFAULTS)
    views = list(args.views)
    if args.config:
        from_file, config_views = read_fit_config(args.config)
        settings.update(from_file)
        if not views:
            views = config_views
    for key in _FIT_DEFAULTS:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            settings[key] = cli_value
    if not views:
        raise UsageError("no input views given (positional paths or config sections)")
    if not settings["out"]:
        raise UsageError("no output path given (--out or 'out' in the config)")

    dataset = load_views(views, delimiter=settings["delimiter"],
                         header=settings["header"])
    spec, transformed = fit_preprocess(dataset, settings["preprocess"])
    artifact = fit_views(
        transformed,
        k0=settings["k0"],
        k_per_view=(_parse_int_list(settings["km"])
                    if isinstance(settings["km"], str) else settings["km"]),
        k_max=settings["k_max"],
        k0_max=settings["k0_max"],
        nu0=settings["nu0"],
        sigma0_sq=settings["sigma0_sq"],
        rho_mode=settings["rho_mode"],
        exact_pair_count=settings["exact_pair_count"],
        seed=settings["seed"],
        preprocessing=spec.to_records(),
    )
    save_artifact(artifact, settings["out"])
    logger.info("artifact written to %s", settings["out"])
    return 0


def _cmd_simulate(args):
    config = read_sim_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    report = run_experiment(config)
    if args.out_csv:
        report_to_csv(report, args.out_csv, include_timings=args.include_timings)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            fh.write(report.to_json(include_timings=args.include_timings))
    if not args.out_csv and not args.out_json:
        sys.stdout.write(report.to_json(include_timings=args.include_timings))
        sys.stdout.write("\n")
    return 0


def _cmd_intervals(args):
    fit = load_artifact(args.fit)
    m2 = args.view if args.view2 is None else args.view2
    p_rows = fit.posteriors[args.view].lambda_hat.shape[0]
    p_cols = fit.posteriors[m2].lambda_hat.shape[0]
    mat = interval_matrix(
        fit, args.view, m2, args.alpha, args.method,
        _parse_index_spec(args.rows, p_rows),
        _parse_index_spec(args.cols, p_cols))
    write_intervals_csv(args.out, mat)
    return 0


def _subset_spec(fit, view_indices):
    records = fit.preprocessing
    if not records or records[0].get("mode", "none") == "none":
        return None
    spec = PreprocessSpec.from_records([records[m] for m in view_indices])
    return spec


def _cmd_predict(args):
    fit = load_artifact(args.fit)
    dataset = load_views([args.data], delimiter=args.delimiter, header=args.header)
    spec = _subset_spec(fit, [args.given_view])
    rows = spec.apply(dataset).views[0] if spec else dataset.views[0]
    mean, _ = conditional_prediction(
        point_estimates(fit), args.given_view, rows, args.target_view)
    _write_matrix_csv(args.out, mean)
    return 0


def _cmd_loglik(args):
    fit = load_artifact(args.fit)
    subset = (_parse_int_list(args.subset) if args.subset
              else list(range(fit.n_views)))
    dataset = load_views(args.views, delimiter=args.delimiter, header=args.header)
    if dataset.n_views != len(subset):
        raise UsageError("one test CSV per requested view")
    spec = _subset_spec(fit, subset)
    mats = spec.apply(dataset).views if spec else dataset.views
    blocks = point_estimates(fit)
    rowwise = gaussian_loglik(blocks, subset, mats, per_sample=True)
    if args.per_sample:
        with open(args.per_sample, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "loglik"])
            for i, val in enumerate(rowwise):
                writer.writerow([i, "%.17g" % val])
    sys.stdout.write("%.17g\n" % float(np.sum(rowwise)))
    return 0


def _cmd_export_corr(args):
    fit = load_artifact(args.fit)
    corr = export_correlations(fit, args.view, args.view2,
                               threshold_by_interval=args.threshold,
                               alpha=args.alpha)
    _write_matrix_csv(args.out, corr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fama",
        description="Multi-view factor alignment, posteriors, and intervals.")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress stage logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model on CSV views")
    p.add_argument("views", nargs="*",
                   help="view CSVs; may instead come from --config sections")
    p.add_argument("--config", default=None,
                   help="key=value fit settings with one [view NAME] "
                        "section per view (flags here take precedence)")
    p.add_argument("--out", default=None)
    p.add_argument("--delimiter", default=None)
    p.add_argument("--header", action=argparse.BooleanOptionalAction,
                   default=None, help="first CSV row holds column names")
    p.add_argument("--preprocess", default=None,
                   choices=("none", "standardize", "rank-normal"))
    p.add_argument("--k0", type=int, default=None)
    p.add_argument("--km", default=None,
                   help="comma-separated per-view ranks; skips rank selection")
    p.add_argument("--k-max", dest="k_max", type=int, default=None)
    p.add_argument("--k0-max", dest="k0_max", type=int, default=None)
    p.add_argument("--nu0", type=float, default=None)
    p.add_argument("--sigma0-sq", dest="sigma0_sq", type=float, default=None)
    p.add_argument("--rho-mode", dest="rho_mode", default=None,
                   choices=("mean", "max", "none"))
    p.add_argument("--exact-pair-count", dest="exact_pair_count",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="run a seeded replicate experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.add_argument("--include-timings", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("intervals", help="interval CSV for one block")
    p.add_argument("--fit", required=True)
    p.add_argument("--view", type=int, required=True)
    p.add_argument("--view2", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", default="clt", choices=("clt", "bvm"))
    p.add_argument("--rows", default=None, help="comma list or a:b range")
    p.add_argument("--cols", default=None, help="comma list or a:b range")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_intervals)

    p = sub.add_parser("predict", help="cross-view conditional means")
    p.add_argument("--fit", required=True)
    p.add_argument("--given-view", dest="given_view", type=int, required=True)
    p.add_argument("--target-view", dest="target_view", type=int, required=True)
    p.add_argument("--data", required=True)
    _add_csv_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("loglik", help="held-out Gaussian log-likelihood")
    p.add_argument("--fit", required=True)
    p.add_argument("views", nargs="+")
    p.add_argument("--subset", default=None,
                   help="comma-separated view indices matching the CSVs")
    _add_csv_args(p)
    p.add_argument("--per-sample", dest="per_sample", default=None)
    p.set_defaults(func=_cmd_loglik)

    p = sub.add_parser("export-corr", help="plot-ready correlation CSV")
    p.add_argument("--fit", required=True)
    p.add_argument("--view", type=int, required=True)
    p.add_argument("--view2", type=int, default=None)
    p.add_argument("--threshold", action="store_true",
                   help="zero entries whose interval for the low-rank "
                        "component contains 0")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_corr)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.quiet:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="fama: %(message)s")
    try:
        return args.func(args)
    except FamaError as exc:
        sys.stderr.write(f"fama: error: {exc}\n")
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        sys.stderr.write(f"fama: numeric failure: {exc}\n")
        return 4
    except OSError as exc:
        sys.stderr.write(f"fama: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())

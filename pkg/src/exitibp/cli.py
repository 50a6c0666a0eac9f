"""Command line interface: run experiments from JSON configs, validate suites.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 runtime estimator fault.
"""

import argparse
import csv
import json
import math
import os
import sys

from . import __version__
from .estimators import (ConfigError, EstimatorFault, ExperimentConfig,
                         dump_path_summaries, run_estimator,
                         test_function_preset)
from .model import ModelError
from .oracle import (EULER_DERIVATIVE, EULER_FUNCTIONAL, OracleError,
                     euler_bridge_estimate, functional_by_quadrature)
from .rng import RngStream
from .validation import SUITES, run_suite

CSV_FIELDS = ("experiment_id", "estimator", "model_preset", "f_preset",
              "lambda", "T", "x0", "L", "n_samples", "mean", "stderr",
              "ci99_lo", "ci99_hi", "kurtosis", "abort_count", "seconds")


def _append_csv_row(path: str, row: dict) -> None:
    """Append one result row; the header is written only when the file is new."""
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if need_header:
            writer.writeheader()
        writer.writerow(row)


def _format(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _run_oracle(config: ExperimentConfig) -> dict:
    import time
    model = config.build_model()
    f = config.build_test_function()
    t0 = time.perf_counter()
    if config.estimator == "OracleQuadrature":
        value = functional_by_quadrature(model, f, mode=config.oracle_mode,
                                         include_atom=config.include_atom)
        stderr = 0.0
        kurt = math.nan
        aborts = 0
        lo = hi = value
    else:
        mode = (EULER_DERIVATIVE if config.oracle_mode == "derivative"
                else EULER_FUNCTIONAL)
        stats = euler_bridge_estimate(model, f, mode, config.n_samples,
                                      config.euler_n_steps,
                                      RngStream(config.seed, 0))
        value = stats.mean
        stderr = stats.stderr()
        lo, hi = stats.ci99()
        kurt = stats.kurtosis()
        aborts = stats.abort_count
    return {"mean": value, "stderr": stderr, "ci99_lo": lo, "ci99_hi": hi,
            "kurtosis": kurt, "abort_count": aborts,
            "seconds": time.perf_counter() - t0,
            "model_preset": model.preset, "f_preset": f.preset}


def cmd_run(config_path: str) -> int:
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"config error: cannot read {config_path}: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: {config_path} is not valid JSON "
              f"(line {exc.lineno}): {exc.msg}", file=sys.stderr)
        return 2
    try:
        config = ExperimentConfig.from_dict(raw)
        config.build_model()           # surface preset errors before sampling
        config.build_test_function()
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if config.estimator in ("OracleQuadrature", "OracleEuler"):
            meta = _run_oracle(config)
        else:
            stats, meta = run_estimator(config)
            if config.dump_paths:
                rows = dump_path_summaries(config, config.dump_paths)
                print(f"wrote {rows} path rows to {config.dump_paths}")
    except (EstimatorFault, OracleError) as exc:
        print(f"estimator fault: {exc}", file=sys.stderr)
        return 3

    row = {
        "experiment_id": config.experiment_id,
        "estimator": config.estimator,
        "model_preset": meta["model_preset"] if "model_preset" in meta
        else config.model_preset,
        "f_preset": config.f_preset,
        "lambda": _format(config.lambda_poisson),
        "T": _format(config.T), "x0": _format(config.x0),
        "L": _format(config.L), "n_samples": config.n_samples,
        "mean": _format(meta["mean"]), "stderr": _format(meta["stderr"]),
        "ci99_lo": _format(meta["ci99_lo"]), "ci99_hi": _format(meta["ci99_hi"]),
        "kurtosis": _format(meta["kurtosis"]),
        "abort_count": meta["abort_count"],
        "seconds": _format(meta["seconds"]),
    }
    _append_csv_row(config.output_csv, row)
    print(f"{config.experiment_id} [{config.estimator}] "
          f"mean = {meta['mean']:.8g} +/- {meta['stderr']:.3g}  "
          f"CI99 = [{meta['ci99_lo']:.8g}, {meta['ci99_hi']:.8g}]  "
          f"kurtosis = {meta['kurtosis']:.3g}  "
          f"aborts = {meta['abort_count']}  "
          f"seconds = {meta['seconds']:.2f}")
    if meta["abort_count"] > 0:
        print("warning: aborted paths present, estimate may be biased")
    if "mom_mean" in meta:
        print(f"median-of-means = {meta['mom_mean']:.8g} "
              f"+/- {meta['mom_stderr']:.3g}")
    return 0


def cmd_validate(suite: str) -> int:
    if suite not in SUITES:
        print(f"unknown suite {suite!r} (have {sorted(SUITES)})", file=sys.stderr)
        return 2
    results = run_suite(suite)
    for res in results:
        if not res.passed:
            print(f"validation failed at criterion {res.index}: {res.name}",
                  file=sys.stderr)
            return 1
    print(f"suite {suite}: all {len(results)} criteria passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exitibp",
        description="Unbiased Monte Carlo estimation of first-exit-time "
                    "functionals of one-dimensional diffusions.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", help="path to the experiment config JSON")
    p_val = sub.add_parser("validate", help="run an acceptance suite")
    p_val.add_argument("suite", help="suite name: smoke or full")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    return cmd_validate(args.suite)


if __name__ == "__main__":
    sys.exit(main())

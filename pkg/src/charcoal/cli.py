"""Command-line front end.

Subcommands: ``detect`` (run the estimators on a CSV dataset), ``simulate``
(write synthetic datasets and their ground truth), ``calibrate`` (Monte-Carlo
test-threshold calibration) and ``benchmark`` (named experiment presets).

File formats:

- data CSV: header ``x1,...,xp,y``, one row per time point;
- truth JSON: ``{"n", "p", "changepoints", "theta_norms", "seed", "config"}``;
- report JSON: ``{"mode", "changepoints", "h_max", "sigma_tilde", "lambda",
  "threshold_T", "config", "stages"}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .linalg import ConvergenceError, DimensionError, RankDeficiencyError
from .multi import MultiConfig, detect_multiple
from .simulate import (
    PRESETS,
    MultiSpec,
    SimConfig,
    config_dict,
    generate_multi,
    generate_single,
    preset_scenarios,
    run_benchmark,
)
from .single import calibrate_threshold_detail, detect_single
from .sketch import RegressionData

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    """Problem with an input data file."""


def read_data_csv(path: str) -> RegressionData:
    """Read a ``x1,...,xp,y`` CSV, reporting malformed cells by row/column."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        width = len(header)
        if width < 2:
            raise DataError(f"{path}: line 1: need at least two columns (x1,...,xp,y)")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
                )
            values = []
            for ci, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {header[ci]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {lineno}, column {header[ci]!r}: non-finite value"
                    )
                values.append(value)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    return RegressionData(arr[:, :-1], arr[:, -1])


def write_data_csv(path: str, data: RegressionData) -> None:
    p = data.p
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join([f"x{j + 1}" for j in range(p)] + ["y"]) + "\n")
        for i in range(data.n):
            cells = [repr(v) for v in data.X[i]] + [repr(data.Y[i])]
            fh.write(",".join(cells) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonify) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_trace_csv(path: str, times, stats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,statistic\n")
        for t, s in zip(times, stats):
            fh.write(f"{int(t)},{float(s)!r}\n")


def write_trace_svg(path: str, times, stats, label: str) -> None:
    """Minimal single-series SVG line chart of the statistic trace."""
    width, height, pad = 800, 400, 50
    ts = np.asarray(times, dtype=float)
    ys = np.asarray(stats, dtype=float)
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    t_lo, t_hi = float(ts.min()), float(ts.max())
    if t_hi == t_lo:
        t_lo, t_hi = t_lo - 1.0, t_hi + 1.0

    def sx(t):
        return pad + (t - t_lo) / (t_hi - t_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    points = " ".join(f"{sx(t):.2f},{sy(y):.2f}" for t, y in zip(ts, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{points}"/>',
        f'<text x="{pad}" y="{pad - 18}" font-size="14">{label}</text>',
        f'<text x="{pad - 8}" y="{height - pad + 16}" font-size="11" text-anchor="end">{t_lo:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="11" text-anchor="end">{t_hi:g}</text>',
        f'<text x="{pad - 6}" y="{height - pad}" font-size="11" text-anchor="end">{y_lo:.3g}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" font-size="11" text-anchor="end">{y_hi:.3g}</text>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _resolve_threads(args) -> int:
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("CHARCOAL_THREADS", "1"))
    if threads < 1:
        raise ValueError("--threads must be at least 1")
    return threads


def _trace_path(args) -> str:
    if args.trace:
        return args.trace
    if args.output:
        stem, _ = os.path.splitext(args.output)
        return stem + ".trace.csv"
    return "charcoal_trace.csv"


def cmd_detect(args) -> int:
    data = read_data_csv(args.input)
    threads = _resolve_threads(args)
    trace_path = _trace_path(args)
    config_echo = {
        "input": args.input,
        "method": args.method,
        "multi": bool(args.multi),
        "alpha": args.alpha,
        "lambda_c": args.lambda_c,
        "lasso_lambda": args.lasso_lambda,
        "intervals": args.intervals,
        "level": args.level,
        "threshold": args.threshold,
        "calib_b": args.calib_b,
        "varpi": args.varpi,
        "seed": args.seed,
        "threads": threads,
    }

    if args.multi:
        alpha = 0.05 if args.alpha is None else args.alpha
        level = args.level if args.level is not None else 0.01 / args.intervals
        if args.threshold is not None:
            T = args.threshold
        else:
            calib = calibrate_threshold_detail(
                data.n,
                data.p,
                alpha=alpha,
                lam_coef=args.lambda_c,
                B=args.calib_b,
                M=args.intervals,
                level=level,
                seed=args.seed,
                threads=threads,
            )
            T = calib.T
        cfg = MultiConfig(
            T=T,
            M=args.intervals,
            varpi=args.varpi,
            alpha=alpha,
            lam_coef=args.lambda_c,
            seed=args.seed,
        )
        result = detect_multiple(data, cfg)
        sigma_tilde = None
        trace_times: list[int] = []
        trace_stats: list[float] = []
        if data.n - data.p >= 2:
            probe = detect_single(data, "soft", alpha=alpha, lam_coef=args.lambda_c, seed=args.seed)
            sigma_tilde = probe.sigma_tilde
            est = probe.estimate
            trace_times = list(range(est.t_lo, est.t_lo + est.trace.size))
            trace_stats = list(est.trace)
        config_echo["alpha"] = alpha
        report = {
            "mode": "multi",
            "changepoints": [int(z) for z in result.refined],
            "h_max": None,
            "sigma_tilde": sigma_tilde,
            "lambda": None,
            "threshold_T": T,
            "config": config_echo,
            "stages": {
                "raw": [int(z) for z in result.raw],
                "pruned": [int(z) for z in result.pruned],
                "refined": [int(z) for z in result.refined],
            },
            "trace": trace_path,
        }
    else:
        if data.n <= data.p:
            raise DataError(
                f"single-changepoint detection needs more rows than covariates "
                f"(n={data.n}, p={data.p}): the complementary sketch requires n > p"
            )
        alpha = 0.0 if args.alpha is None else args.alpha
        res = detect_single(
            data,
            method=args.method,
            alpha=alpha,
            lam_coef=args.lambda_c,
            seed=args.seed,
            lam_strategy=args.lasso_lambda,
        )
        est = res.estimate
        trace_times = list(range(est.t_lo, est.t_lo + est.trace.size))
        trace_stats = list(est.trace)
        config_echo["alpha"] = alpha
        report = {
            "mode": "single",
            "changepoints": [int(est.location)],
            "h_max": est.h_max,
            "sigma_tilde": res.sigma_tilde,
            "lambda": res.lam,
            "threshold_T": None,
            "config": config_echo,
            "stages": None,
            "trace": trace_path,
        }

    write_trace_csv(trace_path, trace_times, trace_stats)
    if args.plot:
        if trace_times:
            write_trace_svg(args.plot, trace_times, trace_stats, "scan statistic")
        else:
            raise DataError("nothing to plot: data too short for a statistic trace")
    write_json(args.output, report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.preset is not None:
        presets = {
            "M1": dict(n=1200, p=200, changepoints=(240, 540, 900), ratios=(1.0, 1.5, 2.0)),
            "M2": dict(
                n=2400, p=400, changepoints=(720, 1320, 1800, 2160), ratios=(1.0, 1.15, 1.45, 2.18)
            ),
        }
        info = presets[args.preset]
        spec = MultiSpec(
            n=info["n"],
            p=info["p"],
            changepoints=info["changepoints"],
            magnitudes=tuple(args.rho_min * r for r in info["ratios"]),
            k=args.k if args.k is not None else 3,
            seed=args.seed,
        )
        data, truth = generate_multi(spec)
        changepoints = list(spec.changepoints)
        theta_norms = [float(np.linalg.norm(th)) for th in truth.thetas]
        config_echo = {"preset": args.preset, "rho_min": args.rho_min, **config_dict(spec)}
    else:
        missing = [name for name in ("n", "p", "k", "rho", "tau") if getattr(args, name) is None]
        if missing:
            raise ValueError(f"missing required flags for single-change simulation: {missing}")
        cfg = SimConfig(
            n=args.n,
            p=args.p,
            k=args.k,
            rho=args.rho,
            tau=args.tau,
            sigma=args.sigma,
            design=args.design,
            noise=args.noise,
            seed=args.seed,
        )
        data, truth = generate_single(cfg)
        changepoints = [int(truth.z)]
        theta_norms = [float(np.linalg.norm(truth.theta))]
        config_echo = config_dict(cfg)

    write_data_csv(args.output, data)
    truth_path = args.truth
    if truth_path is None:
        stem, _ = os.path.splitext(args.output)
        truth_path = stem + ".truth.json"
    write_json(
        truth_path,
        {
            "n": data.n,
            "p": data.p,
            "changepoints": changepoints,
            "theta_norms": theta_norms,
            "seed": args.seed,
            "config": config_echo,
        },
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    threads = _resolve_threads(args)
    level = args.level if args.level is not None else 0.01 / args.intervals
    calib = calibrate_threshold_detail(
        args.n,
        args.p,
        alpha=args.alpha,
        lam_coef=args.lambda_c,
        B=args.b,
        M=args.intervals,
        level=level,
        seed=args.seed,
        threads=threads,
    )
    if calib.gev is not None:
        gev_payload = {
            "location": calib.gev.location,
            "scale": calib.gev.scale,
            "shape": calib.gev.shape,
        }
    else:
        gev_payload = "empirical-fallback"
    write_json(
        args.output,
        {
            "T": calib.T,
            "gev_params": gev_payload,
            "B": calib.B,
            "level": calib.level,
            "seed": calib.seed,
        },
    )
    return EXIT_OK


def cmd_benchmark(args) -> int:
    threads = _resolve_threads(args)
    if args.reps < 1:
        raise ValueError("--reps must be at least 1")
    scenarios = preset_scenarios(args.preset, rho_min=args.rho_min, k=args.k)
    all_rows = []
    summaries = {}
    for label, scenario, estimators in scenarios:
        rows, summary = run_benchmark(
            scenario,
            estimators or None,
            reps=args.reps,
            seed=args.seed,
            threads=threads,
            name=label,
        )
        all_rows.extend(rows)
        summaries[label] = summary

    columns = ["scenario", "rep", "estimator", "loss", "nu_hat", "nu_err", "hausdorff", "ari", "wall_time"]
    if args.output_csv:
        with open(args.output_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, restval="")
            writer.writeheader()
            for row in all_rows:
                writer.writerow(row)
    payload = {"preset": args.preset, "reps": args.reps, "seed": args.seed, "scenarios": summaries}
    write_json(args.output_json, payload)
    return EXIT_OK


def _lasso_lambda_flag(text: str):
    if text in ("scaled", "cv5"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--lasso-lambda must be 'scaled', 'cv5' or a number (got {text!r})"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="charcoal",
        description="Changepoint detection in high-dimensional linear regression "
        "via complementary sketching.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="run changepoint detection on a CSV dataset")
    p_detect.add_argument("--input", required=True, help="data CSV with header x1,...,xp,y")
    p_detect.add_argument(
        "--method",
        choices=("proj", "lasso-bic", "soft", "hard"),
        default="proj",
        help="single-changepoint estimator (default: proj)",
    )
    p_detect.add_argument("--multi", action="store_true", help="multiple-changepoint pipeline")
    p_detect.add_argument(
        "--alpha",
        type=float,
        default=None,
        help="burn-in fraction (default: 0 for single, 0.05 for multi)",
    )
    p_detect.add_argument(
        "--lambda-c",
        dest="lambda_c",
        type=float,
        default=0.5,
        help="coefficient c in lambda = c * sigma_tilde * ln(p) (default 0.5)",
    )
    p_detect.add_argument(
        "--lasso-lambda",
        type=_lasso_lambda_flag,
        default="scaled",
        help="penalty strategy for --method lasso-bic: scaled, cv5, or a fixed value",
    )
    p_detect.add_argument("--intervals", type=int, default=200, help="interval count M (multi)")
    p_detect.add_argument(
        "--level", type=float, default=None, help="test level (default 0.01/M, multi)"
    )
    p_detect.add_argument(
        "--threshold", type=float, default=None, help="explicit test threshold T (skips calibration)"
    )
    p_detect.add_argument(
        "--calib-b", type=int, default=1000, help="calibration replicates when T is not given"
    )
    p_detect.add_argument("--varpi", type=float, default=0.0, help="interval trim fraction (multi)")
    p_detect.add_argument("--seed", type=int, default=0)
    p_detect.add_argument("--output", default=None, help="report JSON path (default: stdout)")
    p_detect.add_argument("--trace", default=None, help="statistic trace CSV path")
    p_detect.add_argument("--plot", default=None, help="optional SVG chart of the trace")
    p_detect.add_argument("--threads", type=int, default=None)
    p_detect.set_defaults(func=cmd_detect)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset and its truth")
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--p", type=int, default=None)
    p_sim.add_argument("--k", type=int, default=None)
    p_sim.add_argument("--rho", type=float, default=None, help="change magnitude ||theta||_2")
    p_sim.add_argument("--tau", type=float, default=None, help="change location fraction")
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--design", choices=("gauss-iid", "ar-toeplitz", "rademacher"), default="gauss-iid")
    p_sim.add_argument(
        "--noise", choices=("gauss", "t4", "t6", "exp-centered", "rademacher"), default="gauss"
    )
    p_sim.add_argument("--preset", choices=("M1", "M2"), default=None, help="multi-change presets")
    p_sim.add_argument("--rho-min", dest="rho_min", type=float, default=1.6)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", required=True, help="data CSV path")
    p_sim.add_argument("--truth", default=None, help="truth JSON path (default: <output>.truth.json)")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="Monte-Carlo calibration of the test threshold")
    p_cal.add_argument("--n", type=int, required=True)
    p_cal.add_argument("--p", type=int, required=True)
    p_cal.add_argument("--alpha", type=float, default=0.05)
    p_cal.add_argument("--lambda-c", dest="lambda_c", type=float, default=0.5)
    p_cal.add_argument("--b", type=int, default=1000, help="null replicates B (default 1000)")
    p_cal.add_argument("--intervals", type=int, default=200, help="interval count M for the default level")
    p_cal.add_argument("--level", type=float, default=None, help="upper quantile level (default 0.01/M)")
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--output", default=None, help="threshold JSON path (default: stdout)")
    p_cal.add_argument("--threads", type=int, default=None)
    p_cal.set_defaults(func=cmd_calibrate)

    p_bench = sub.add_parser("benchmark", help="run a named benchmark preset")
    p_bench.add_argument("--preset", choices=PRESETS, required=True)
    p_bench.add_argument("--reps", type=int, required=True)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--rho-min", dest="rho_min", type=float, default=1.6)
    p_bench.add_argument("--k", type=int, default=None, help="override preset sparsity")
    p_bench.add_argument("--output-csv", dest="output_csv", default=None)
    p_bench.add_argument("--output-json", dest="output_json", default=None, help="default: stdout")
    p_bench.add_argument("--threads", type=int, default=None)
    p_bench.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"charcoal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DimensionError, RankDeficiencyError) as exc:
        print(f"charcoal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"charcoal: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"charcoal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: simulate, fit, filter, test, analyze.

All stochastic commands require an explicit --seed and are byte-reproducible
from (seed, config).  Structured results go to JSON, series and curves to
CSV; floats are serialized in shortest round-trip form, so re-reading an
artifact recovers the exact doubles.  Exit codes: 0 success, 1 validation
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import estimator, gain, kalman, markov, panel as panel_mod, simulate, trendtests
from .errors import (
    DataValidationError,
    InvalidArgumentError,
    InvalidSpecError,
    MsmTrendError,
    NumericalError,
)


class CliUsageError(MsmTrendError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit(2) on usage problems; route them through the
    # validation path instead so exit codes keep their documented meaning
    def error(self, message):
        raise CliUsageError(message)


def _sanitize(obj):
    """Replace non-finite floats by None so artifacts stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return _sanitize(obj.item())
    return obj


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_sanitize(doc), fh, indent=2)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: malformed JSON ({exc})") from exc


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[h]) for h in header) + "\n")


def _require(args, names) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise CliUsageError(f"--{name} is required")
    # fail on unwritable output locations before any computation starts
    import os

    for name in names:
        if name.startswith("out"):
            path = getattr(args, name.replace("-", "_"))
            parent = os.path.dirname(os.path.abspath(str(path)))
            if not os.path.isdir(parent):
                raise CliUsageError(f"--{name}: directory {parent} does not exist")


def _load_trend(path) -> estimator.TrendSeries:
    doc = read_json(path)
    try:
        return estimator.TrendSeries.from_json_dict(doc)
    except (KeyError, TypeError) as exc:
        raise DataValidationError(f"{path}: not a trend-series document ({exc})") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    _require(args, ["model-spec", "n", "seed", "out"])
    structure, params = markov.load_model_spec(args.model_spec)
    if params is None:
        raise InvalidSpecError(f"{args.model_spec} has no 'params' block to simulate from")
    config = simulate.SimulationConfig(
        n=args.n,
        structure=structure,
        params=params,
        seed=args.seed,
        age_range=(args.age_min, args.age_max),
        female_share=args.female_share,
    )
    pnl = simulate.simulate_panel(config)
    panel_mod.write_panel(args.out, pnl)
    print(f"wrote {len(pnl)} observations for {config.n} individuals to {args.out}")
    return 0


def cmd_fit_msm(args) -> int:
    _require(args, ["panel", "out-estimate", "out-trend"])
    pnl = panel_mod.read_panel(args.panel)
    problems = panel_mod.validate_panel(pnl)
    if problems:
        raise DataValidationError("; ".join(problems[:10]))
    if args.model_spec:
        structure, _ = markov.load_model_spec(args.model_spec)
    else:
        wave_times = tuple(sorted(np.unique(pnl.times)))
        structure = markov.default_structure(pnl.ages, wave_times)
    result = estimator.fit_msm(pnl, structure, maxiter=args.maxiter)
    doc = result.to_json_dict()
    doc["structure"] = {
        "knots": list(structure.knots),
        "wave_times": list(structure.wave_times),
        "ref_age": structure.ref_age,
    }
    write_json(args.out_estimate, doc)
    trend = estimator.extract_trend(result, structure)
    write_json(args.out_trend, trend.to_json_dict())
    status = "converged" if result.converged else "NOT converged"
    print(f"fit {status}: loglik={result.loglik:.6f}, n={result.n_transitions} transitions")
    if not result.converged:
        raise NumericalError("estimation did not converge; partial output written")
    return 0


def cmd_fit_filter(args) -> int:
    _require(args, ["trend", "out"])
    series = _load_trend(args.trend)
    fit = kalman.fit_filter(series, variant=args.variant, mode=args.mode, level=args.level)
    report = kalman.diagnostics(fit.output, fit.model, series.n_waves, lags=args.lags)
    out = fit.output
    doc = {
        "variant": fit.model.variant,
        "mode": fit.model.mode,
        "estimates": {
            "sigma_eta": fit.model.sigma_eta,
            "nu": fit.model.nu if fit.model.variant == "const_drift" else None,
            "sigma_xi": fit.model.sigma_xi if fit.model.variant == "stoch_drift" else None,
            "sigma_eps": fit.model.sigma_eps,
        },
        "ci": {k: list(v) for k, v in fit.ci.items()},
        "flags": {
            "converged": fit.converged,
            "boundary": fit.boundary,
            "no_ci": fit.no_ci,
            "warnings": fit.warnings,
        },
        "loglik": fit.loglik,
        "diagnostics": {
            "bic": report.bic,
            "n_params": report.n_params,
            "ljung_box": {
                "lags": report.ljung_box_lags,
                "stat": report.ljung_box,
                "p": report.ljung_box_pvalue,
            },
            "bowman_shenton": {"stat": report.bowman_shenton, "p": report.bowman_shenton_pvalue},
            "r1": report.r1,
            "r2": report.r2,
            "notes": report.notes,
        },
        "waves": {
            "prior_mean": out.prior_mean,
            "prior_var": out.prior_var,
            "innovation": out.innovation,
            "innovation_var": out.innovation_var,
            "gain": out.gain,
            "post_mean": out.post_mean,
            "post_var": out.post_var,
            "std_residuals": out.std_residuals,
            "n_diffuse": out.n_diffuse,
        },
    }
    write_json(args.out, doc)
    if args.out_forecast:
        fc = kalman.forecast(out, fit.model, args.horizon, level=args.level)
        rows = [
            {
                "h": int(h),
                "mean_log": m,
                "var": v,
                "lo": lo,
                "hi": hi,
                "mean_hazard_scale": hz,
            }
            for h, m, v, lo, hi, hz in zip(
                fc.horizons, fc.mean_log, fc.variance, fc.lower, fc.upper, fc.mean_hazard_scale
            )
        ]
        write_csv(args.out_forecast, ["h", "mean_log", "var", "lo", "hi", "mean_hazard_scale"], rows)
    flags = f" boundary={fit.boundary}" if fit.boundary else ""
    print(f"filter {fit.model.variant}/{fit.model.mode}: loglik={fit.loglik:.6f} bic={report.bic:.6f}{flags}")
    return 0


def cmd_test_trend(args) -> int:
    _require(args, ["trend", "seed", "out"])
    series = _load_trend(args.trend)
    report = trendtests.run_trend_tests(
        series,
        lags=args.lags,
        estimator=args.estimator,
        dist=args.dist,
        mc_grid=args.mc_grid,
        mc_reps=args.mc_reps,
        seed=args.seed,
        double_offdiag=args.double_offdiag,
    )
    write_json(args.out, report.to_json_dict())
    if args.out_critical:
        table = trendtests.simulate_critical_values(
            "bridge" if args.critical_functional == "bridge" else "wiener",
            n_grid=args.mc_grid,
            reps=args.mc_reps,
            seed=args.seed,
        )
        rows = [{"level": lv, "value": v} for lv, v in sorted(table.quantiles.items())]
        write_csv(args.out_critical, ["level", "value"], rows)
    print(
        f"t_nu={report.t_nu:.4f} (p_normal={report.t_nu_p_normal:.4f}), "
        f"t_sd={report.t_sd:.4f} (p={report.t_sd_p:.4f}), t_s={report.t_s:.4f} (p={report.t_s_p:.4f})"
    )
    return 0


def cmd_gain_analysis(args) -> int:
    _require(args, ["out-trajectory", "out-fixed-point"])
    if args.trend:
        _require(args, ["sigma-eta"])
        series = _load_trend(args.trend)
        s = args.sigma_eta**2 / series.var_diag
    else:
        _require(args, ["s", "periods"])
        s = np.full(args.periods, args.s)
    traj = gain.gain_sequence(s)
    rows = list(traj.as_rows())
    for row in rows:
        k = row["k"]
        if 2 <= k <= len(s) - 1:
            step = gain.linear_map_decomposition(s, k)
            row["slope"], row["intercept"] = step.slope, step.intercept
        else:
            row["slope"] = row["intercept"] = float("nan")
    write_csv(
        args.out_trajectory,
        ["k", "k_paper", "s", "gain", "nu_var", "slope", "intercept"],
        rows,
    )
    fp_rows = []
    for k, sk in enumerate(s, start=1):
        fp = gain.fixed_point(float(sk))
        fp_rows.append({"k": k, "s": fp.s, "iota": fp.iota, "nu_inf": fp.nu_inf, "k_inf": fp.k_inf})
    write_csv(args.out_fixed_point, ["k", "s", "iota", "nu_inf", "k_inf"], fp_rows)
    print(f"wrote gain trajectory ({len(rows)} waves) and fixed points")
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise CliUsageError(f"bad grid spec {spec!r}, expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise CliUsageError(f"bad grid spec {spec!r}")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def cmd_power_curve(args) -> int:
    _require(args, ["k", "s", "out"])
    grid = _parse_grid(args.grid)
    curve = gain.power(grid, args.k, args.s, mode=args.mode)
    write_csv(args.out, ["x", "value"], curve.as_rows())
    if args.size_out:
        # size lives on nonnegative shocks: mirror the power grid
        size_grid = np.unique(np.abs(grid))
        alpha = gain.size(size_grid, args.k, args.s, mode=args.mode)
        write_csv(args.size_out, ["x", "value"], alpha.as_rows())
    print(f"wrote power curve over {grid.size} points (k={args.k}, s={args.s}, {args.mode})")
    return 0


def cmd_report(args) -> int:
    _require(args, ["out"])
    doc = {"tool": "msmtrend", "sections": {}}
    for key, path in (
        ("estimation", args.estimate),
        ("trend", args.trend),
        ("filter", args.filter),
        ("trend_tests", args.trend_tests),
    ):
        if path:
            doc["sections"][key] = read_json(path)
    if not doc["sections"]:
        raise CliUsageError("nothing to aggregate; give at least one input JSON")
    write_json(args.out, doc)
    print(f"aggregated {len(doc['sections'])} sections into {args.out}")
    return 0


def cmd_validate(args) -> int:
    _require(args, ["panel"])
    pnl = panel_mod.read_panel(args.panel)
    problems = panel_mod.validate_panel(pnl)
    for line in problems:
        print(line)
    if problems:
        raise DataValidationError(f"{len(problems)} problem(s) found")
    print("panel is clean")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="msmtrend", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="JSON file supplying defaults for any flag")
        p.add_argument("--threads", type=int, default=None,
                       help="reserved; results never depend on thread count")
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic misclassified panel CSV")
    p.add_argument("--model-spec", help="model-spec JSON with a params block")
    p.add_argument("--n", type=int, help="number of individuals")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--age-min", type=float, default=None)
    p.add_argument("--age-max", type=float, default=None)
    p.add_argument("--female-share", type=float, default=None)
    p.add_argument("--out", help="output panel CSV")

    p = add("fit-msm", cmd_fit_msm, "fit the multi-state model to a panel CSV")
    p.add_argument("--panel")
    p.add_argument("--model-spec", help="structure JSON; defaults derived from the panel")
    p.add_argument("--maxiter", type=int, default=None)
    p.add_argument("--out-estimate")
    p.add_argument("--out-trend")

    p = add("fit-filter", cmd_fit_filter, "ML filter fit, diagnostics and forecast")
    p.add_argument("--trend")
    p.add_argument("--variant", choices=kalman.VARIANTS, default=None)
    p.add_argument("--mode", choices=("constrained", "free"), default=None)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--out-forecast")

    p = add("test-trend", cmd_test_trend, "nonparametric drift tests")
    p.add_argument("--trend")
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--estimator", choices=("hac", "long_run"), default=None)
    p.add_argument("--dist", choices=("normal", "t"), default=None)
    p.add_argument("--double-offdiag", action="store_true", default=None)
    p.add_argument("--mc-grid", type=int, default=None)
    p.add_argument("--mc-reps", type=int, default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--out-critical")
    p.add_argument("--critical-functional", choices=("bridge", "wiener"), default=None)

    p = add("gain-analysis", cmd_gain_analysis, "gain trajectory and fixed points")
    p.add_argument("--trend")
    p.add_argument("--sigma-eta", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--out-trajectory")
    p.add_argument("--out-fixed-point")

    p = add("power-curve", cmd_power_curve, "analytic power/size curves")
    p.add_argument("--k", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--mode", choices=("exact", "asymptotic"), default=None)
    p.add_argument("--grid", default=None, help="start:stop:step for eta/sigma_eta")
    p.add_argument("--out")
    p.add_argument("--size-out")

    p = add("report", cmd_report, "aggregate prior outputs into one JSON")
    p.add_argument("--estimate")
    p.add_argument("--trend")
    p.add_argument("--filter")
    p.add_argument("--trend-tests")
    p.add_argument("--out")

    p = add("validate", cmd_validate, "schema-check a panel CSV")
    p.add_argument("--panel")

    return parser


_DEFAULTS = {
    "simulate": {"age_min": 52.0, "age_max": 88.0, "female_share": 0.55},
    "fit-msm": {"maxiter": 500},
    "fit-filter": {"variant": "zero_drift", "mode": "constrained", "level": 0.90,
                   "lags": 4, "horizon": 10},
    "test-trend": {"lags": 3, "estimator": "hac", "dist": "normal",
                   "double_offdiag": False, "mc_grid": 1000, "mc_reps": 20000,
                   "critical_functional": "bridge"},
    "gain-analysis": {},
    "power-curve": {"mode": "exact", "grid": "-3:0:0.1"},
    "report": {},
    "validate": {},
}


def _apply_config(args) -> None:
    """Fill unset flags from --config, then from built-in defaults."""
    config = {}
    if getattr(args, "config", None):
        config = read_json(args.config)
        if not isinstance(config, dict):
            raise DataValidationError(f"{args.config}: config must be a JSON object")
    defaults = _DEFAULTS.get(args.command, {})
    for key, value in {**defaults, **{k.replace("-", "_"): v for k, v in config.items()}}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args)
        return args.fn(args)
    except (CliUsageError, DataValidationError, InvalidSpecError, InvalidArgumentError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: validation: missing file: {exc.filename}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

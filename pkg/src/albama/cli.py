"""``albama`` command-line tool: simulate, fit, benchmark, evaluate.

Every option can also come from a flat ``key = value`` file given with
``--config``; keys are the long option names with or without the leading
dashes (``min-leaf`` and ``min_leaf`` both work). Flags on the command line
win over the file. List options take comma-separated values.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import filters, outputs, simulation
from .errors import AlbamaError, DataError, NumericalError
from .evaluation import METHOD_PAIRS, EvalSettings, full_report
from .filters import FilterOutput
from .forest import ForestParams, bucket_shares, extract_weights, fit_one_sided, fit_two_sided, forest_fitted
from .series import TimeSeries, TransformKind, get_window, load_csv, transform
from .trendfilters import boosted_hp, default_lambda_grid, l1_trend_filter, select_lambda_cv
from .tree import TreeParams

logger = logging.getLogger("albama")

OUTPUT_DIR_ENV = "ALBAMA_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in _split(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in _split(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return _split(text)


def _split(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags override it")
    p.add_argument("--output-dir", help=f"where to write results (default: ${OUTPUT_DIR_ENV} or the current directory)")
    p.add_argument("--seed", type=int, default=42, help="seed for simulation noise and the forest (default 42)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_input(p: argparse.ArgumentParser, many: bool = False) -> None:
    g = p.add_argument_group("input (a CSV file or a simulated scenario)")
    if many:
        g.add_argument("--input", type=_str_list, help="comma-separated CSV paths")
        g.add_argument("--scenario", type=_str_list, help="comma-separated scenarios: gradual, abrupt, combined")
    else:
        g.add_argument("--input", help="CSV with date and value columns")
        g.add_argument("--scenario", choices=[s.value for s in simulation.Scenario])
    g.add_argument("--date-column", default="date")
    g.add_argument("--value-column", default="value")
    g.add_argument("--transform", default=TransformKind.ANNUALIZED_MOM.value,
                   choices=[k.value for k in TransformKind],
                   help="applied to CSV input only (default annualized_mom)")
    g.add_argument("--T", dest="T", type=int, default=300, help="simulated length (default 300)")
    g.add_argument("--sigma", type=float, default=0.5, help="simulated noise s.d. (default 0.5)")


def _add_forest(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("forest")
    g.add_argument("--trees", type=int, default=500)
    g.add_argument("--min-leaf", type=int, default=40)
    g.add_argument("--max-depth", type=int, default=None)
    g.add_argument("--no-bootstrap", action="store_true")
    g.add_argument("--warmup", type=int, default=24)
    g.add_argument("--n-jobs", type=int, default=1, help="worker processes for one-sided refits; -1 for all CPUs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="albama", description="Bagged-tree adaptive moving averages.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic scenario (date, signal, noisy)")
    _add_common(p)
    p.add_argument("--scenario", default="combined", choices=[s.value for s in simulation.Scenario])
    p.add_argument("--T", dest="T", type=int, default=300)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--start", default="2000-01", help="first month (default 2000-01)")

    p = sub.add_parser("fit", help="AlbaMA fitted values, weights and lag-bucket shares")
    _add_common(p)
    _add_input(p)
    _add_forest(p)
    p.add_argument("--mode", default="both", choices=["one-sided", "two-sided", "both"])

    p = sub.add_parser("benchmark", help="benchmark smoothers in one long CSV")
    _add_common(p)
    _add_input(p)
    p.add_argument("--ma", type=_int_list, default=[3, 6, 12], help="moving-average lengths (default 3,6,12)")
    p.add_argument("--ema-span", type=int, default=12)
    p.add_argument("--sg-window", type=int, default=11)
    p.add_argument("--sg-order", type=int, default=3)
    p.add_argument("--l1-order", type=int, default=4, help="difference order of the l1 trend filter (default 4)")
    p.add_argument("--l1-lambda", type=float, default=None, help="base penalty; chosen by cross-validation if absent")
    p.add_argument("--l1-grid", type=_float_list, default=None, help="penalty grid for cross-validation")
    p.add_argument("--l1-scales", type=_float_list, default=[0.1, 1.0, 4.0])
    p.add_argument("--hp-lambdas", type=_float_list, default=[0.1, 1.0, 100.0])
    p.add_argument("--hp-iter", type=int, default=100)
    p.add_argument("--no-hp-stop", action="store_true", help="run all boosting iterations, no BIC stop")

    p = sub.add_parser("evaluate", help="one-sided vs two-sided consistency report")
    _add_common(p)
    _add_input(p, many=True)
    _add_forest(p)
    p.add_argument("--methods", type=_str_list, default=list(METHOD_PAIRS))
    p.add_argument("--windows", type=_str_list, default=["full"],
                   help="named windows or START:END ranges (default full)")
    p.add_argument("--sg-window", type=int, default=11)
    p.add_argument("--sg-order", type=int, default=3)
    p.add_argument("--full-sample-mean", action="store_true",
                   help="centre the R^2 denominator on the full-sample two-sided mean")
    return parser


# -------------------------------------------------------------------- config


def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _config_defaults(sub: argparse.ArgumentParser, config: dict[str, str]) -> dict:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in config.items():
        a = actions.get(key) or actions.get(key.upper())
        if a is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(a, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean, got {raw!r}")
            val = raw.lower() in ("true", "1", "yes")
        else:
            try:
                val = a.type(raw) if a.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if a.choices is not None and val not in a.choices:
                raise UsageError(f"config key {key!r}: {val!r} not one of {list(a.choices)}")
        defaults[a.dest] = val
    return defaults


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        sub.set_defaults(**_config_defaults(sub, read_config(args.config)))
        args = parser.parse_args(argv)
    return args


# -------------------------------------------------------------------- helpers


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _forest_params(args) -> ForestParams:
    tree = TreeParams(min_leaf=args.min_leaf, max_depth=args.max_depth)
    return ForestParams(n_trees=args.trees, tree=tree, bootstrap=not args.no_bootstrap, seed=args.seed)


def _scenario_series(name: str, args) -> TimeSeries:
    if name not in {s.value for s in simulation.Scenario}:
        raise UsageError(f"unknown scenario {name!r}")
    return simulation.generate(simulation.ScenarioSpec(name, args.T, args.sigma, args.seed))


def _csv_series(path: str, args) -> TimeSeries:
    ts = load_csv(path, args.date_column, args.value_column, name=Path(path).stem)
    return transform(ts, args.transform)


def _single_input(args) -> TimeSeries:
    if bool(args.input) == bool(args.scenario):
        raise UsageError("give exactly one of --input or --scenario")
    return _csv_series(args.input, args) if args.input else _scenario_series(args.scenario, args)


def _many_inputs(args) -> dict[str, TimeSeries]:
    series: dict[str, TimeSeries] = {}
    for path in args.input or []:
        ts = _csv_series(path, args)
        series[ts.name] = ts
    for name in args.scenario or []:
        series[name] = _scenario_series(name, args)
    if not series:
        raise UsageError("give at least one --input or --scenario")
    return series


# ------------------------------------------------------------------- commands


def cmd_simulate(args) -> list[Path]:
    spec = simulation.ScenarioSpec(args.scenario, args.T, args.sigma, args.seed, args.start)
    ts = simulation.generate(spec)
    path = _output_dir(args) / f"{spec.scenario.value}.csv"
    outputs.write_simulation(path, ts.dates, simulation.signal(spec), ts.values)
    return [path]


def cmd_fit(args) -> list[Path]:
    y = _single_input(args)
    params = _forest_params(args)
    fits, mats, shares = {}, {}, {}
    if args.mode in ("one-sided", "both"):
        est, W = fit_one_sided(y, params, args.warmup, args.n_jobs)
        fits["one-sided"], mats["one-sided"] = est, W
        shares["one-sided"] = bucket_shares(W)
    if args.mode in ("two-sided", "both"):
        model = fit_two_sided(y, params)
        W = extract_weights(model)
        fits["two-sided"], mats["two-sided"] = forest_fitted(model), W
        shares["two-sided"] = bucket_shares(W)
    out = _output_dir(args)
    paths = [out / n for n in ("fitted.csv", "weights_dense.csv", "weights_long.csv", "buckets.csv")]
    outputs.write_fitted(paths[0], fits)
    outputs.write_weights_dense(paths[1], mats)
    outputs.write_weights_long(paths[2], mats)
    outputs.write_buckets(paths[3], shares)
    return paths


def _full(y: TimeSeries, values: np.ndarray, name: str) -> FilterOutput:
    return FilterOutput(values, np.ones(len(y), dtype=bool), y.timestamps, name)


def cmd_benchmark(args) -> list[Path]:
    y = _single_input(args)
    results: list[tuple[str, FilterOutput, str]] = []
    info: dict = {"series": y.name, "n_obs": len(y), "methods": {}}

    def attempt(name, fn):
        # one failing method is reported in its rows; the others still run
        try:
            out, status, extra = fn()
        except AlbamaError as exc:
            out = FilterOutput(np.full(len(y), np.nan), np.zeros(len(y), dtype=bool), y.timestamps, name)
            status, extra = f"error: {type(exc).__name__}: {exc}", {}
        results.append((name, out, status))
        info["methods"][name] = {"status": status, **extra}

    for k in args.ma:
        attempt(f"MA({k}) 1s", lambda k=k: (filters.ma_one_sided(y, k), "ok", {}))
        attempt(f"MA({k}) 2s", lambda k=k: (filters.ma_two_sided(y, k), "ok", {}))
    attempt(f"EMA({args.ema_span})", lambda: (filters.ema(y, args.ema_span), "ok", {}))
    sg = f"SG({args.sg_window},{args.sg_order})"
    attempt(f"{sg} 1s", lambda: (filters.sg_one_sided(y, args.sg_window, args.sg_order), "ok", {}))
    attempt(f"{sg} 2s", lambda: (filters.sg_two_sided(y, args.sg_window, args.sg_order), "ok", {}))

    base = args.l1_lambda
    try:
        if base is None:
            grid = args.l1_grid if args.l1_grid is not None else list(default_lambda_grid())
            base = select_lambda_cv(y, args.l1_order, grid)
            info["l1_lambda_source"] = "cross-validation"
        else:
            info["l1_lambda_source"] = "fixed"
        info["l1_lambda"] = base
    except AlbamaError as exc:
        info["l1_lambda_error"] = f"{type(exc).__name__}: {exc}"
    for scale in args.l1_scales:
        name = f"L1({scale:g}l)"
        def l1(scale=scale, name=name):
            if base is None:
                raise DataError("no base penalty: " + info["l1_lambda_error"])
            res = l1_trend_filter(y, scale * base, args.l1_order)
            return (_full(y, res.trend, name), "ok" if res.converged else "not_converged",
                    {"lambda": scale * base, "iterations": res.iterations, "polished": res.polished})
        attempt(name, l1)

    for lam in args.hp_lambdas:
        name = f"bHP({lam:g})"

        def bhp(lam=lam, name=name):
            res = boosted_hp(y, lam, args.hp_iter, early_stopping=not args.no_hp_stop)
            return _full(y, res.trend, name), "ok", {"lambda": lam, "m_stop": res.m_stop}
        attempt(name, bhp)

    out = _output_dir(args)
    csv_path, json_path = out / "benchmark.csv", out / "benchmark_info.json"
    outputs.write_benchmark(csv_path, y.dates, results)
    json_path.write_text(json.dumps(info, indent=1) + "\n", encoding="utf-8")
    return [csv_path, json_path]


def cmd_evaluate(args) -> list[Path]:
    series = _many_inputs(args)
    windows = [get_window(w) for w in args.windows]
    settings = EvalSettings(forest=_forest_params(args), warmup=args.warmup, sg_window=args.sg_window,
                            sg_order=args.sg_order, n_jobs=args.n_jobs, full_sample_mean=args.full_sample_mean)
    for m in args.methods:
        if m not in METHOD_PAIRS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHOD_PAIRS)}")
    report = full_report(series, args.methods, windows, settings)
    out = _output_dir(args)
    paths = [out / "report.csv", out / "summary.json"]
    report.write_csv(paths[0])
    report.write_json(paths[1])
    return paths


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "benchmark": cmd_benchmark, "evaluate": cmd_evaluate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"albama: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help or a usage error
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        try:
            paths = COMMANDS[args.command](args)
        except UsageError as exc:
            print(f"albama: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except NumericalError as exc:
            print(f"albama: numerical error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        except (AlbamaError, OSError) as exc:
            print(f"albama: data error: {exc}", file=sys.stderr)
            return EXIT_DATA
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

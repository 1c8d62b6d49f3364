"""Command-line entry point.

Every command except ``metrics`` reads a YAML system config and the CSV
series it lists, writes CSV results under ``--out`` and logs to standard
error. Values are resolved as flag, then the config's ``run`` section, then
built-in default.

Exit codes: 0 success, 1 invalid config or data (including an infeasible
model), 2 solver stopped at a limit without a feasible solution, 3 file
errors, 64 bad usage.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .config import ConfigError, load_config, load_series, series_start
from .evaluate import (
    LONG_HEADER,
    ComparisonRow,
    Metrics,
    compare_out_of_sample,
    cost_per_mwh,
    eev,
    ev_first_stage,
    solve_plan,
    summarize,
    vss,
    write_comparison_table,
    write_table,
)
from .model import MODES, ModelOptions, NoSolution, build_model, first_stage_of
from .network import SystemSpec, build_network, validate_system
from .rolling import RollConfig, roll_horizon
from .scenario import (
    WEEK,
    ScenarioSet,
    TimeSeries,
    block_bootstrap,
    expected_scenario,
    sample_triangular,
    weighted_history_scenarios,
)
from .solver import SolveParams
from .solver.mps import write_lp, write_mps

logger = logging.getLogger("dhnet")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NO_SOLUTION = 2
EXIT_IO = 3
EXIT_USAGE = 64

DEFAULTS: dict[str, Any] = {
    "data": None,
    "out": "out",
    "mode": "operational",
    "start": None,
    "horizon": 24,
    "first_stage": 24,
    "window": 168,
    "step": 24,
    "days": 14,
    "storage_target": "hard",
    "time_limit": 600.0,
    "gap": 1e-4,
    "solver": "bundled",
    "seed": 0,
    "jobs": 1,
    "count": 10,
}

METRICS_HEADER = ["case", "objective_EUR", "el_sales_MWh", "income_EUR", "heat_MWh", "cost_per_MWh",
                  "res_share_pct", "status", "gap"]
BIDS_HEADER = ["market", "t", "step", "price_EUR_per_MWh", "quantity_MWh"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


@dataclass
class RunConfig:
    """Everything a command needs besides the system description."""

    config: str
    out: str
    data: str | None = None
    mode: str = "operational"
    start: pd.Timestamp | None = None
    horizon: int = 24
    first_stage: int = 24
    window: int = 168
    step: int = 24
    days: int = 14
    storage_target: str = "hard"
    seed: int = 0
    jobs: int = 1
    count: int = 10
    params: SolveParams = field(default_factory=SolveParams)

    @classmethod
    def resolve(cls, args: argparse.Namespace, run: dict[str, Any], config: str = "") -> "RunConfig":
        unknown = set(run) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown run settings {sorted(unknown)}")

        def pick(key):
            val = getattr(args, key, None)
            if val is None:
                val = run.get(key)
            return DEFAULTS[key] if val is None else val

        data = pick("data")
        if data is not None and getattr(args, "data", None) is None and config:
            data = os.path.join(os.path.dirname(os.path.abspath(config)), str(data))
        mode = str(pick("mode"))
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        start = pick("start")
        params = SolveParams(gap=float(pick("gap")), time_limit=float(pick("time_limit")),
                             milp_engine=str(pick("solver")))
        return cls(
            config=config,
            out=str(pick("out")),
            data=None if data is None else str(data),
            mode=mode,
            start=None if start is None else pd.Timestamp(start),
            horizon=int(pick("horizon")),
            first_stage=int(pick("first_stage")),
            window=int(pick("window")),
            step=int(pick("step")),
            days=int(pick("days")),
            storage_target=str(pick("storage_target")),
            seed=int(pick("seed")),
            jobs=int(pick("jobs")),
            count=int(pick("count")),
            params=params,
        )


class Inputs:
    """A system with its series, addressed by hour offset from the series start."""

    def __init__(self, spec: SystemSpec, series: dict[str, TimeSeries]):
        if not series:
            raise ConfigError("the config lists no series")
        self.spec = spec
        self.series = series
        self.start = series_start(series)
        self.length = min(len(s) for s in series.values())
        self.price = list(spec.uncertain.get("price", []))
        self.heat = list(spec.uncertain.get("heat", []))
        missing = set(self.price + self.heat) - set(series)
        if missing:
            raise ConfigError(f"uncertain quantities without series: {sorted(missing)}")

    @property
    def uncertain(self) -> list[str]:
        return self.price + self.heat

    def offset(self, when: pd.Timestamp | None, default: int) -> int:
        if when is None:
            return default
        return next(iter(self.series.values())).index_of(when)

    def stamp(self, offset: int) -> pd.Timestamp:
        return self.start + pd.Timedelta(hours=offset)

    def _check(self, offset: int, length: int) -> None:
        if offset < 0 or offset + length > self.length:
            raise ConfigError(f"series cover hours [0, {self.length}), need [{offset}, {offset + length})")

    def actual(self, offset: int, length: int) -> dict[str, np.ndarray]:
        self._check(offset, length)
        return {k: s.values[offset:offset + length].copy() for k, s in self.series.items()}

    def realized(self, offset: int, length: int) -> ScenarioSet:
        return ScenarioSet.single(self.actual(offset, length), self.stamp(offset))

    def static(self, offset: int, length: int) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.actual(offset, length).items() if k not in self.uncertain}

    def history(self, offset: int, length: int) -> ScenarioSet:
        """Nine scenarios from the three weeks before ``offset``."""
        if length > WEEK:
            raise ConfigError(f"history scenarios cover at most {WEEK} hours, asked for {length}")
        if offset < 3 * WEEK:
            raise ConfigError(f"need three weeks of history before hour {offset}")
        hist = {k: self.series[k].weeks_before(offset)[:, :length] for k in self.uncertain}
        return weighted_history_scenarios(hist, self.price, self.heat, static=self.static(offset, length),
                                          start=self.stamp(offset))


def _load(rc: RunConfig, spec: SystemSpec) -> Inputs:
    return Inputs(spec, load_series(spec, rc.data))


def _out(rc: RunConfig, *parts: str) -> str:
    os.makedirs(rc.out, exist_ok=True)
    return os.path.join(rc.out, *parts)


def _metrics_record(case: str, m: Metrics, status: str = "", gap: float = math.nan) -> list:
    return [case, m.objective, m.el_net, m.income, m.heat, m.cost_per_mwh, m.res_share, status, float(gap)]


def _write_bids(path: str, curves: dict[tuple[str, int], list[tuple[float, float]]]) -> None:
    rows = []
    for (mid, t), curve in sorted(curves.items()):
        for k, (price, qty) in enumerate(curve):
            rows.append([mid, t, k, float(price), float(qty)])
    write_table(path, BIDS_HEADER, rows)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, spec: SystemSpec, rc: RunConfig) -> int:
    report = validate_system(spec)
    for line in str(report).splitlines():
        if line != "ok":
            logger.warning(line) if line.startswith("warning") else logger.error(line)
    if not report.ok:
        return EXIT_INVALID
    if spec.series:
        inputs = _load(rc, spec)
        logger.info("%d series from %s, %d hours", len(inputs.series), inputs.start, inputs.length)
    print(f"{spec.name}: ok ({len(spec.vertices)} vertices, {len(spec.connections)} connections)")
    return EXIT_OK


def cmd_plan(args, spec: SystemSpec, rc: RunConfig, mode: str | None = None) -> int:
    mode = mode or rc.mode
    inputs = _load(rc, spec)
    origin = inputs.offset(rc.start, 3 * WEEK)
    sset = inputs.history(origin, rc.horizon)
    res = solve_plan(spec, sset, mode, rc.horizon, rc.first_stage, rc.storage_target, rc.params)
    logger.info("%s plan: %s, objective %.2f, gap %.2g", mode, res.outcome.status, res.objective,
                res.outcome.gap)
    res.schedule.to_csv(_out(rc, "schedule.csv"))
    sto = summarize(res.schedule)
    write_table(_out(rc, "metrics.csv"), METRICS_HEADER,
                [_metrics_record(f"{spec.name}-{mode}", sto, res.outcome.status, res.outcome.gap)])
    if mode == "bidding":
        fs = first_stage_of(res.schedule, "bidding", min(rc.first_stage, rc.horizon))
        _write_bids(_out(rc, "bids.csv"), fs.curves)
    if args.compare:
        e = eev(spec, sset, mode, rc.horizon, rc.first_stage, rc.storage_target, rc.params)
        row = ComparisonRow(f"{spec.name}-{rc.horizon}", summarize(e.schedule), sto)
        write_comparison_table(_out(rc, "comparison.csv"), [row])
        logger.info("EEV %.2f, RP %.2f, VSS %.2f (%.2f %%)", e.value, res.objective, row.vss.absolute,
                    row.vss.percent)
    return EXIT_OK


def cmd_bid(args, spec, rc) -> int:
    return cmd_plan(args, spec, rc, "bidding")


def cmd_roll(args, spec: SystemSpec, rc: RunConfig) -> int:
    inputs = _load(rc, spec)
    origin = inputs.offset(rc.start, 3 * WEEK)
    total = rc.days * 24
    realized = inputs.realized(origin, total)
    policy = args.policy

    def provider(offset: int, length: int) -> ScenarioSet:
        if policy == "perfect":
            return inputs.realized(origin + offset, length)
        sset = inputs.history(origin + offset, length)
        return expected_scenario(sset) if policy == "expected" else sset

    mode = rc.mode
    config = RollConfig(window=rc.window, step=rc.step, total=total, mode=mode, params=rc.params,
                        options=ModelOptions(mode=mode))
    trace = roll_horizon(spec, provider, realized, config)
    trace.write(rc.out)
    m = summarize(trace)
    write_table(_out(rc, "metrics.csv"), METRICS_HEADER,
                [_metrics_record(f"{spec.name}-roll-{policy}-{mode}", m, "ok")])
    logger.info("%d iterations, realized cost %.2f", len(trace.iterations), trace.realized_cost)
    return EXIT_OK


def cmd_evaluate_long(args, spec: SystemSpec, rc: RunConfig) -> int:
    inputs = _load(rc, spec)
    origin = inputs.offset(rc.start, 0)
    hours = rc.days * 24
    real = inputs.realized(origin, hours)
    t0 = time.perf_counter()
    res = solve_plan(spec, real, "deterministic", hours, hours, rc.storage_target, rc.params)
    runtime = time.perf_counter() - t0
    res.schedule.to_csv(_out(rc, "schedule.csv"))
    m = summarize(res.schedule)
    write_table(_out(rc, "long.csv"), LONG_HEADER,
                [[f"{spec.name}-{rc.days}d", m.objective, runtime, m.res_share]])
    logger.info("deterministic %d h: %s, objective %.2f in %.1f s", hours, res.outcome.status, m.objective,
                runtime)
    return EXIT_OK


def cmd_sample(args, spec: SystemSpec, rc: RunConfig) -> int:
    inputs = _load(rc, spec)
    origin = inputs.offset(rc.start, 3 * WEEK)
    hours = rc.days * 24
    static = inputs.static(origin, hours)
    if args.method == "triangular":
        if hours > WEEK:
            raise ConfigError(f"triangular samples cover at most {WEEK // 24} days")
        if origin < 3 * WEEK:
            raise ConfigError(f"need three weeks of history before hour {origin}")
        hist = {k: inputs.series[k].weeks_before(origin)[:, :hours] for k in inputs.uncertain}
        samples = sample_triangular(hist, rc.count, rc.seed, clamp=inputs.heat, static=static,
                                    start=inputs.stamp(origin))
    else:
        # two weeks before the three history weeks and the two weeks from the start
        before = origin - 5 * WEEK
        if before < 0 or origin + 2 * WEEK > inputs.length:
            raise ConfigError("bootstrap needs five weeks of data before the start and two weeks from it")
        hist = {k: np.concatenate([inputs.series[k].values[before:before + 2 * WEEK],
                                   inputs.series[k].values[origin:origin + 2 * WEEK]])
                for k in inputs.uncertain}
        samples = block_bootstrap(hist, inputs.stamp(before), rc.count, rc.seed, start=inputs.stamp(origin),
                                  days=rc.days, static=static)
    samples.write(rc.out)
    logger.info("%d %s samples of %d hours", len(samples), args.method, hours)
    if args.evaluate:
        horizon = min(hours, WEEK)
        fs_len = min(rc.first_stage, horizon)
        sset = inputs.history(origin, horizon)
        rp = solve_plan(spec, sset, rc.mode, horizon, fs_len, rc.storage_target, rc.params)
        ev = solve_plan(spec, expected_scenario(sset), "deterministic", horizon, fs_len, rc.storage_target,
                        rc.params)
        policy_rp = first_stage_of(rp.schedule, rc.mode, fs_len)
        policy_ev = ev_first_stage(ev.schedule, rc.mode, fs_len)
        result = compare_out_of_sample(spec, policy_ev, policy_rp, samples, params=rc.params, jobs=rc.jobs)
        result.write(_out(rc, f"out_of_sample_{args.method}.csv"))
        s = result.summary()
        logger.info("stochastic over expected-value policy: mean saving %.3f %% over %d samples",
                    s["mean"], s["count"])
    return EXIT_OK


def cmd_export(args, spec: SystemSpec, rc: RunConfig) -> int:
    inputs = _load(rc, spec)
    origin = inputs.offset(rc.start, 3 * WEEK)
    if rc.mode == "deterministic":
        sset = inputs.realized(origin, rc.horizon)
    else:
        sset = inputs.history(origin, rc.horizon)
    net = build_network(spec, rc.horizon, min(rc.first_stage, rc.horizon), sset, storage_target=rc.storage_target)
    problem = build_model(net, ModelOptions(mode=rc.mode))
    path = args.output or _out(rc, f"model.{args.format}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    (write_mps if args.format == "mps" else write_lp)(problem, path)
    logger.info("wrote %s: %d variables, %d rows", path, problem.num_vars, problem.num_rows)
    return EXIT_OK


def _read_trace_summary(path: str) -> list[dict[str, str]]:
    if os.path.isdir(path):
        for cand in (os.path.join(path, "trace", "summary.csv"), os.path.join(path, "summary.csv")):
            if os.path.exists(cand):
                path = cand
                break
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def cmd_metrics(args) -> int:
    groups = [args.rp is not None or args.eev is not None, args.objective is not None or args.heat is not None,
              args.trace is not None]
    if sum(groups) != 1:
        raise UsageError("give exactly one of --rp/--eev, --objective/--heat or --trace")
    if groups[0]:
        if args.rp is None or args.eev is None:
            raise UsageError("--rp and --eev go together")
        v = vss(args.rp, args.eev)
        header, rows = ["rp_EUR", "eev_EUR", "vss_EUR", "vss_pct"], [[args.rp, args.eev, v.absolute, v.percent]]
    elif groups[1]:
        if args.objective is None or args.heat is None:
            raise UsageError("--objective and --heat go together")
        header = ["objective_EUR", "heat_MWh", "cost_per_MWh"]
        rows = [[args.objective, args.heat, cost_per_mwh(args.objective, args.heat)]]
    else:
        recs = _read_trace_summary(args.trace)
        keys = ["planned_cost", "realized_cost", "heat_MWh", "el_net_MWh", "imbalance_MWh"]
        header = ["iterations"] + keys
        rows = [[len(recs)] + [float(sum(float(r[k]) for r in recs)) for k in keys]]
    if args.output:
        write_table(args.output, header, rows)
    else:
        wr = csv.writer(sys.stdout, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("config", help="YAML system config")
        p.add_argument("--data", help="directory holding the series CSVs (default: paths in the config)")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--start", help="first planned hour, ISO timestamp (default: three weeks into the data)")
        p.add_argument("--time-limit", type=float, help="solver time limit in seconds (default: 600)")
        p.add_argument("--gap", type=float, help="relative optimality gap (default: 1e-4)")
        p.add_argument("--solver", choices=["bundled", "highs"],
                       help="MILP solver: bundled branch and bound or HiGHS (default: bundled)")
        p.add_argument("--storage-target", choices=["hard", "soft", "free"],
                       help="end-of-horizon storage level rule (default: hard)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output")


def _horizon(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=int, help="planning horizon in hours (default: 24)")
    p.add_argument("--first-stage", type=int, help="hours of first-stage decisions (default: 24)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dhnet", description="District heating dispatch planning under uncertainty.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a config and its series")
    _common(p)

    for name, text in (("plan", "operational stochastic plan"), ("bid", "bidding curves for the day-ahead market")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _horizon(p)
        if name == "plan":
            p.add_argument("--mode", choices=list(MODES), help="model type (default: operational)")
        p.add_argument("--compare", action="store_true", help="also evaluate the expected-value plan")

    p = sub.add_parser("roll", help="rolling-horizon run settled on realized data")
    _common(p)
    p.add_argument("--window", type=int, help="planning window in hours (default: 168)")
    p.add_argument("--step", type=int, help="hours committed per iteration (default: 24)")
    p.add_argument("--days", type=int, help="days to roll (default: 14)")
    p.add_argument("--mode", choices=list(MODES), help="model type (default: operational)")
    p.add_argument("--policy", choices=["stochastic", "expected", "perfect"], default="stochastic",
                   help="scenarios per window: history, their mean, or the realized data")

    p = sub.add_parser("evaluate-long", help="deterministic run on realized data")
    _common(p)
    p.add_argument("--days", type=int, help="days to plan (default: 14)")

    p = sub.add_parser("sample", help="out-of-sample data sets")
    _common(p)
    p.add_argument("--method", choices=["triangular", "bootstrap"], required=True)
    p.add_argument("--count", type=int, help="number of samples (default: 10)")
    p.add_argument("--days", type=int, help="days per sample (default: 7 for triangular)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--mode", choices=["operational", "bidding"], help="policy model type (default: operational)")
    p.add_argument("--first-stage", type=int, help="hours of first-stage decisions (default: 24)")
    p.add_argument("--evaluate", action="store_true",
                   help="compare the stochastic and expected-value policies on the samples")
    p.add_argument("--jobs", type=int, help="parallel sample evaluations (default: 1)")

    p = sub.add_parser("export", help="write the model as MPS or LP")
    _common(p)
    _horizon(p)
    p.add_argument("--mode", choices=list(MODES), help="model type (default: operational)")
    p.add_argument("--format", choices=["mps", "lp"], default="mps")
    p.add_argument("--output", help="file to write (default: <out>/model.<format>)")

    p = sub.add_parser("metrics", help="VSS, cost per MWh or rolling-trace totals")
    _common(p, config=False)
    p.add_argument("--rp", type=float, help="stochastic objective")
    p.add_argument("--eev", type=float, help="expected-value policy objective")
    p.add_argument("--objective", type=float)
    p.add_argument("--heat", type=float, help="heat delivered, MWh")
    p.add_argument("--trace", help="rolling output directory or its summary.csv")
    p.add_argument("--output", help="write the CSV here instead of standard output")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "plan": cmd_plan,
    "bid": cmd_bid,
    "roll": cmd_roll,
    "evaluate-long": cmd_evaluate_long,
    "sample": cmd_sample,
    "export": cmd_export,
}


def _setup_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("dhnet")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    _setup_logging(args.verbose)
    try:
        if args.command == "metrics":
            return cmd_metrics(args)
        spec, run = load_config(args.config)
        if args.command == "sample" and args.days is None and "days" not in run:
            args.days = 7
        rc = RunConfig.resolve(args, run, args.config)
        return COMMANDS[args.command](args, spec, rc)
    except UsageError as exc:
        logger.error("%s", exc)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except NoSolution as exc:
        logger.error("%s", exc)
        return EXIT_INVALID if exc.status in ("infeasible", "unbounded") else EXIT_NO_SOLUTION
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

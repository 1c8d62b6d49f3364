"""Comparison metrics: EEV, VSS, summaries and out-of-sample savings."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import (
    DispatchSchedule,
    FirstStage,
    ModelOptions,
    NoSolution,
    build_model,
    first_stage_of,
    fix_first_stage,
    solve,
)
from .network import SystemSpec, build_network
from .rolling import RollTrace, SystemState, recourse_evaluate
from .scenario import SampleSet, ScenarioSet, expected_scenario
from .solver import MilpOutcome, SolveParams

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# value of the stochastic solution


@dataclass(frozen=True)
class Vss:
    absolute: float
    percent: float


def vss(rp: float, eev: float) -> Vss:
    """``eev - rp`` and the same as a percentage of ``|eev|``.

    >>> v = vss(111703.8, 118831.0)
    >>> round(v.absolute, 1), round(v.percent, 1)
    (7127.2, 6.0)
    """
    if not (math.isfinite(rp) and math.isfinite(eev)):
        raise ValueError("objective values must be finite")
    diff = eev - rp
    if eev == 0:
        pct = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        pct = diff / abs(eev) * 100.0
    return Vss(diff, pct)


def cost_per_mwh(objective: float, heat: float) -> float:
    return objective / heat if heat > 0 else math.nan


@dataclass
class PlanResult:
    outcome: MilpOutcome
    schedule: DispatchSchedule

    @property
    def objective(self) -> float:
        return self.schedule.objective


def _network(spec, sset, horizon, first_stage, storage_target, state):
    from .rolling import apply_state

    sp = apply_state(spec, state) if state is not None else spec
    T = sset.horizon if horizon is None else horizon
    if sset.horizon > T:
        sset = sset.window(0, T)
    fs = T if first_stage is None else first_stage
    return build_network(sp, T, fs, sset, storage_target=storage_target)


def solve_plan(spec: SystemSpec, sset: ScenarioSet, mode: str = "operational", horizon: int | None = None,
               first_stage: int | None = None, storage_target: str = "hard",
               params: SolveParams | None = None, state: SystemState | None = None,
               options: ModelOptions | None = None) -> PlanResult:
    """Build and solve the model of ``mode`` over ``sset``.

    A single-scenario set in a stochastic mode is solved as deterministic.
    """
    net = _network(spec, sset, horizon, first_stage, storage_target, state)
    opts = options or ModelOptions(mode=mode if net.n_scenarios > 1 else "deterministic")
    problem = build_model(net, opts)
    out, schedule = solve(problem, net, params)
    if schedule is None:
        raise NoSolution("model has no solution", out.status)
    return PlanResult(out, schedule)


def ev_first_stage(ev: DispatchSchedule, mode: str, periods: int | None = None) -> FirstStage:
    """First-stage decisions of an expected-value plan.

    In bidding mode the expected-value plan bids its whole day-ahead
    position as a single step at the expected price.
    """
    fs = first_stage_of(ev, "operational" if mode == "bidding" else mode, periods)
    if mode != "bidding":
        return fs
    net = ev.network
    out = FirstStage("bidding", fs.periods)
    for m in net.spec.markets:
        for t in range(fs.periods):
            price = float(net.market_prices[m.id][t, 0])
            out.curves[(m.id, t)] = [(price, float(ev.market_positions[m.id][t, 0]))]
    return out


@dataclass
class EevResult:
    value: float
    scenario_costs: np.ndarray
    ev: PlanResult
    schedule: DispatchSchedule
    first_stage: FirstStage


def eev(spec: SystemSpec, sset: ScenarioSet, mode: str = "operational", horizon: int | None = None,
        first_stage: int | None = None, storage_target: str = "hard",
        params: SolveParams | None = None, state: SystemState | None = None) -> EevResult:
    """Expected cost of the expected-value plan's first-stage decisions.

    The expected-value problem is solved on the mean scenario; its
    first-stage decisions are then fixed in the stochastic model of
    ``mode`` and the remaining decisions are re-optimised in every
    scenario. With no coupling left beyond the fixed decisions this is the
    probability-weighted sum of per-scenario recourse costs.
    """
    if sset.size < 1:
        raise ValueError("scenario set is empty")
    ev = solve_plan(spec, expected_scenario(sset), "deterministic", horizon, first_stage, storage_target,
                    params, state)
    net = _network(spec, sset, horizon, first_stage, storage_target, state)
    fs = ev_first_stage(ev.schedule, mode, net.first_stage)
    problem = build_model(net, ModelOptions(mode=mode if net.n_scenarios > 1 else "deterministic"))
    fix_first_stage(problem, net, fs)
    out, schedule = solve(problem, net, params)
    if schedule is None:
        raise NoSolution("expected-value policy has no recourse solution", out.status)
    return EevResult(schedule.objective, schedule.scenario_costs, ev, schedule, fs)


# ---------------------------------------------------------------------------
# summaries


@dataclass
class Metrics:
    objective: float
    el_net: float
    income: float
    heat: float
    res_share: float

    @property
    def cost_per_mwh(self) -> float:
        return cost_per_mwh(self.objective, self.heat)


def _res_units(spec: SystemSpec, res_flags) -> set[str]:
    if res_flags is None:
        return {v.id for v in spec.vertices if v.is_unit and v.renewable}
    if isinstance(res_flags, dict):
        return {k for k, flag in res_flags.items() if flag}
    return set(res_flags)


def _unit_heat(schedule: DispatchSchedule) -> dict[str, np.ndarray]:
    net = schedule.network
    f = net.spec.defaults.heat_energy
    out = {}
    for u in net.units():
        if f in u.output_energies():
            out[u.id] = schedule.outflow(u.id, f).sum(axis=0)
    return out


def summarize(result: DispatchSchedule | RollTrace, res_flags=None, scenario: int | None = None) -> Metrics:
    """Metrics of a schedule or of the realized part of a rolling run.

    For a multi-scenario schedule the probability-weighted value is
    reported unless ``scenario`` picks one. Heat counts deliveries to heat
    demand sites; the RES share is the part of unit heat production coming
    from units flagged renewable.
    """
    if isinstance(result, RollTrace):
        parts = [summarize(it.realized, res_flags, 0) for it in result.iterations]
        heat_res = 0.0
        heat_all = 0.0
        for it in result.iterations:
            res = _res_units(it.realized.network.spec, res_flags)
            for u, arr in _unit_heat(it.realized).items():
                heat_all += float(arr[0])
                if u in res:
                    heat_res += float(arr[0])
        return Metrics(
            objective=result.realized_cost,
            el_net=sum(p.el_net for p in parts),
            income=sum(p.income for p in parts),
            heat=sum(p.heat for p in parts),
            res_share=100.0 * heat_res / heat_all if heat_all > 0 else 0.0,
        )
    s = result
    net = s.network
    if scenario is None:
        weights = net.probs
    else:
        weights = np.zeros(net.n_scenarios)
        weights[scenario] = 1.0
    res = _res_units(net.spec, res_flags)
    uh = _unit_heat(s)
    heat_all = float(sum(weights @ a for a in uh.values()))
    heat_res = float(sum(weights @ a for u, a in uh.items() if u in res))
    return Metrics(
        objective=float(weights @ s.scenario_costs),
        el_net=float(weights @ s.market_net()),
        income=float(weights @ s.market_income()),
        heat=float(weights @ s.heat_delivered()),
        res_share=100.0 * heat_res / heat_all if heat_all > 0 else 0.0,
    )


@dataclass
class ComparisonRow:
    case: str
    expected: Metrics
    stochastic: Metrics

    @property
    def vss(self) -> Vss:
        return vss(self.stochastic.objective, self.expected.objective)


COMPARISON_HEADER = [
    "case",
    "exp_objective_EUR", "exp_el_sales_MWh", "exp_income_EUR", "exp_heat_MWh", "exp_cost_per_MWh",
    "sto_objective_EUR", "sto_el_sales_MWh", "sto_income_EUR", "sto_heat_MWh", "sto_cost_per_MWh",
    "vss_EUR", "vss_pct",
]

ROLLING_HEADER = [
    "case",
    "nobid_exp_EUR", "nobid_sto_EUR", "nobid_delta_EUR", "nobid_delta_pct",
    "bid_exp_EUR", "bid_sto_EUR", "bid_delta_EUR", "bid_delta_pct",
]

LONG_HEADER = ["case", "objective_EUR", "runtime_s", "res_share_pct"]


def _fmt(x: float) -> str:
    return repr(float(x))


def comparison_record(row: ComparisonRow) -> list[str]:
    v = row.vss
    rec = [row.case]
    for m in (row.expected, row.stochastic):
        rec += [_fmt(m.objective), _fmt(m.el_net), _fmt(m.income), _fmt(m.heat), _fmt(m.cost_per_mwh)]
    return rec + [_fmt(v.absolute), _fmt(v.percent)]


def write_table(path: str | os.PathLike, header: Sequence[str], records: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in records:
            wr.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def write_comparison_table(path, rows: Iterable[ComparisonRow]) -> None:
    """Expected-value vs stochastic table; one row per case."""
    write_table(path, COMPARISON_HEADER, (comparison_record(r) for r in rows))


def rolling_record(case: str, nobid: tuple[float, float], bid: tuple[float, float]) -> list:
    rec = [case]
    for exp, sto in (nobid, bid):
        v = vss(sto, exp)
        rec += [exp, sto, v.absolute, v.percent]
    return rec


# ---------------------------------------------------------------------------
# out-of-sample comparison


@dataclass
class SampleOutcome:
    sample: int
    cost_a: float
    cost_b: float
    ok: bool = True
    message: str = ""

    @property
    def savings(self) -> float:
        """Saving of policy B relative to policy A, percent of ``|cost_a|``."""
        if not self.ok:
            return math.nan
        if self.cost_a == 0:
            return 0.0 if self.cost_b == 0 else math.copysign(math.inf, self.cost_a - self.cost_b)
        return (self.cost_a - self.cost_b) / abs(self.cost_a) * 100.0


@dataclass
class OutOfSample:
    rows: list[SampleOutcome] = field(default_factory=list)

    def savings(self) -> np.ndarray:
        return np.array([r.savings for r in self.rows if r.ok])

    def summary(self) -> dict[str, float]:
        s = self.savings()
        if s.size == 0:
            return {"count": 0, "failed": len(self.rows), "mean": math.nan, "q10": math.nan,
                    "median": math.nan, "q90": math.nan}
        return {
            "count": int(s.size),
            "failed": len(self.rows) - int(s.size),
            "mean": float(s.mean()),
            "q10": float(np.quantile(s, 0.1)),
            "median": float(np.median(s)),
            "q90": float(np.quantile(s, 0.9)),
        }

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="ascii") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["sample", "cost_a", "cost_b", "savings_pct", "status"])
            for r in self.rows:
                wr.writerow([r.sample, _fmt(r.cost_a), _fmt(r.cost_b), _fmt(r.savings),
                             "ok" if r.ok else f"failed: {r.message}"])
            for k, v in self.summary().items():
                wr.writerow([k, "", "", _fmt(v), "summary"])


def _evaluate_sample(args) -> SampleOutcome:
    i, spec, a, b, real, state, target, params = args
    try:
        ca, _ = recourse_evaluate(spec, a, real, state, target, params)
        cb, _ = recourse_evaluate(spec, b, real, state, target, params)
        return SampleOutcome(i, ca, cb)
    except Exception as exc:  # a failed sample is reported, not fatal
        logger.warning("sample %d failed: %s", i, exc)
        return SampleOutcome(i, math.nan, math.nan, ok=False, message=str(exc))


def compare_out_of_sample(spec: SystemSpec, policy_a: FirstStage, policy_b: FirstStage, samples: SampleSet,
                          state: SystemState | None = None, storage_target: str = "free",
                          params: SolveParams | None = None, jobs: int = 1) -> OutOfSample:
    """Recourse cost of two first-stage policies on every sample.

    Savings are those of policy B over policy A.
    """
    tasks = [(i, spec, policy_a, policy_b, samples.as_scenario_set(i), state, storage_target, params)
             for i in range(len(samples))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_sample, tasks))
    else:
        rows = [_evaluate_sample(t) for t in tasks]
    return OutOfSample(sorted(rows, key=lambda r: r.sample))

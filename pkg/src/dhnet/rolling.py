"""Rolling-horizon planning with settlement on realized data.

Each iteration plans over a window starting at the current hour, keeps the
first ``step`` periods of that plan as binding decisions, re-optimises the
remaining decisions of those periods against the realized data and carries
storage levels and unit states forward.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import (
    DispatchSchedule,
    FirstStage,
    ModelOptions,
    NoSolution,
    build_model,
    first_stage_of,
    fix_first_stage,
    settle_bids,
    solve,
)
from .network import SeriesRef, SystemSpec, build_network
from .scenario import ScenarioSet
from .solver import SolveParams

logger = logging.getLogger(__name__)

__all__ = [
    "RollConfig",
    "SystemState",
    "RollIteration",
    "RollTrace",
    "settle_bids",
    "apply_state",
    "recourse_evaluate",
    "advance_state",
    "roll_horizon",
    "window_lengths",
]

ScenarioProvider = Callable[[int, int], ScenarioSet]


@dataclass
class RollConfig:
    window: int = 168
    step: int = 24
    total: int = 336
    mode: str = "operational"
    receding: bool = True
    # storage target at the end of intermediate windows and at the global end
    window_target: str = "free"
    end_target: str = "soft"
    params: SolveParams = field(default_factory=SolveParams)
    options: ModelOptions | None = None

    def __post_init__(self):
        if not 1 <= self.step <= self.window:
            raise ValueError("step must lie in [1, window]")
        if self.total < 1:
            raise ValueError("total horizon must be positive")
        if self.window_target not in ("hard", "free", "soft") or self.end_target not in ("hard", "free", "soft"):
            raise ValueError("storage targets must be hard, free or soft")

    @property
    def iterations(self) -> int:
        return math.ceil(self.total / self.step)

    def model_options(self) -> ModelOptions:
        if self.options is not None:
            return self.options
        return ModelOptions(mode=self.mode)


def window_lengths(window: int, step: int, total: int, receding: bool = True) -> list[int]:
    """Planning window length of every iteration."""
    n = math.ceil(total / step)
    if receding:
        return [min(window, total - k * step) for k in range(n)]
    return [window] * n


@dataclass
class SystemState:
    """Initial conditions of the next planning window."""

    status: dict[str, int] = field(default_factory=dict)
    hold: dict[str, int] = field(default_factory=dict)
    output: dict[str, dict[str, float]] = field(default_factory=dict)
    levels: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_spec(cls, spec: SystemSpec) -> "SystemState":
        st = cls()
        for v in spec.vertices:
            if v.has_commitment:
                st.status[v.id] = int(v.initial_status)
                st.hold[v.id] = int(v.initial_hold)
            if v.is_unit:
                st.output[v.id] = dict(v.initial_output)
            if v.kind == "storage":
                st.levels[v.id] = float(v.initial_level)
        return st


def apply_state(spec: SystemSpec, state: SystemState) -> SystemSpec:
    """Copy of ``spec`` whose units start from ``state``."""
    out = spec.copy()
    vertices = []
    for v in out.vertices:
        changes = {}
        if v.id in state.status:
            changes["initial_status"] = state.status[v.id]
            changes["initial_hold"] = state.hold.get(v.id, 0)
        if v.id in state.output:
            changes["initial_output"] = dict(state.output[v.id])
        if v.id in state.levels:
            changes["initial_level"] = state.levels[v.id]
        vertices.append(dataclasses.replace(v, **changes) if changes else v)
    out.vertices = vertices
    return out


def recourse_evaluate(spec: SystemSpec, first_stage: FirstStage | None, realized: ScenarioSet,
                      state: SystemState | None = None, storage_target: str = "free",
                      params: SolveParams | None = None) -> tuple[float, DispatchSchedule]:
    """Cost of ``first_stage`` on the realized data.

    Solves the single-scenario model over the realized horizon with the
    first-stage decisions pinned; in bidding mode the day-ahead position is
    the quantity the curve clears at the realized price. Imbalance and
    missing-heat vertices keep the model feasible.
    """
    if realized.size != 1:
        raise ValueError("recourse evaluation needs a single realized scenario")
    sp = apply_state(spec, state) if state is not None else spec
    T = realized.horizon
    net = build_network(sp, T, min(first_stage.periods, T) if first_stage else 0, realized,
                        storage_target=storage_target)
    problem = build_model(net, ModelOptions(mode="deterministic"))
    if first_stage is not None:
        fix_first_stage(problem, net, first_stage)
    out, schedule = solve(problem, net, params, bids=False)
    if schedule is None:
        raise NoSolution("recourse model has no solution", out.status)
    return schedule.objective, schedule


def _residual(prev_hold: int, prev_status: int, status: int, events: np.ndarray, duration: int,
              step: int) -> int:
    # periods of the next window in which the status stays fixed
    res = prev_hold - step if prev_status == status else 0
    idx = np.flatnonzero(events > 0.5)
    if idx.size and duration > 0:
        res = max(res, int(idx[-1]) + duration - step + 1)
    return max(res, 0)


def advance_state(schedule: DispatchSchedule, step: int, state: SystemState | None = None,
                  w: int = 0) -> SystemState:
    """State at the end of period ``step`` of ``schedule``.

    A unit that started (stopped) at period ``s`` keeps its status for
    ``s + min_up - step + 1`` (``min_down``) more periods, or for what
    remains of an earlier fixed-status obligation if that is longer.
    """
    net = schedule.network
    if not 1 <= step <= net.horizon:
        raise ValueError("step must lie within the schedule horizon")
    prev = state or SystemState.from_spec(net.spec)
    nxt = SystemState()
    last = step - 1
    for u in net.units():
        if u.has_commitment:
            z = schedule.status[u.id][:step, w]
            b = int(round(z[last]))
            p_status = prev.status.get(u.id, int(u.initial_status))
            p_hold = prev.hold.get(u.id, int(u.initial_hold))
            if b == 1:
                events, duration = schedule.starts[u.id][:step, w], u.min_up
            else:
                events, duration = schedule.stops[u.id][:step, w], u.min_down
            nxt.status[u.id] = b
            nxt.hold[u.id] = _residual(p_hold, p_status, b, events, duration, step)
        outs = {}
        for f in sorted(u.output_energies()):
            outs[f] = float(sum(schedule.flows[i] for i in net.outgoing(u.id, f, last, w)))
        nxt.output[u.id] = outs
    for s in net.storages():
        nxt.levels[s.id] = float(schedule.storage_levels[s.id][last, w])
    return nxt


@dataclass
class RollIteration:
    index: int
    offset: int
    window: int
    step: int
    plan_status: str
    planned_cost: float
    realized_cost: float
    first_stage: FirstStage
    settled: dict[tuple[str, int], float]
    plan: DispatchSchedule
    realized: DispatchSchedule
    state_in: SystemState
    state_out: SystemState

    @property
    def heat(self) -> float:
        return float(self.realized.heat_delivered()[0])

    @property
    def el_net(self) -> float:
        return float(self.realized.market_net()[0])

    @property
    def imbalance(self) -> float:
        return float(self.realized.imbalance()[0])


@dataclass
class RollTrace:
    config: RollConfig
    iterations: list[RollIteration] = field(default_factory=list)

    @property
    def realized_cost(self) -> float:
        return float(sum(it.realized_cost for it in self.iterations))

    @property
    def planned_cost(self) -> float:
        return float(sum(it.planned_cost for it in self.iterations))

    @property
    def heat(self) -> float:
        return float(sum(it.heat for it in self.iterations))

    def summary_rows(self) -> list[list]:
        return [[it.index, it.planned_cost, it.realized_cost, it.heat, it.el_net, it.imbalance]
                for it in self.iterations]

    def write(self, root: str | os.PathLike) -> None:
        """Write ``trace/iteration_<k>/schedule.csv`` and ``trace/summary.csv`` under ``root``."""
        base = os.path.join(root, "trace")
        os.makedirs(base, exist_ok=True)
        for it in self.iterations:
            d = os.path.join(base, f"iteration_{it.index}")
            os.makedirs(d, exist_ok=True)
            it.realized.to_csv(os.path.join(d, "schedule.csv"))
        with open(os.path.join(base, "summary.csv"), "w", newline="", encoding="ascii") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iteration", "planned_cost", "realized_cost", "heat_MWh", "el_net_MWh", "imbalance_MWh"])
            for row in self.summary_rows():
                wr.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def roll_horizon(spec: SystemSpec, provider: ScenarioProvider, realized: ScenarioSet, config: RollConfig,
                 state: SystemState | None = None) -> RollTrace:
    """Plan, settle and carry state over ``config.total`` periods.

    ``provider(offset, length)`` returns the scenario set for the window
    starting ``offset`` hours after the start of ``realized``.
    """
    if realized.size != 1:
        raise ValueError("realized data must be a single scenario")
    if realized.horizon < config.total:
        raise ValueError(f"realized data covers {realized.horizon} periods, need {config.total}")
    state = state or SystemState.from_spec(spec)
    opts = config.model_options()
    trace = RollTrace(config)
    lengths = window_lengths(config.window, config.step, config.total, config.receding)
    for k, win in enumerate(lengths):
        offset = k * config.step
        n_step = min(config.step, config.total - offset)
        scen = provider(offset, win)
        if scen.horizon < win:
            raise ValueError(f"iteration {k + 1}: scenario set covers {scen.horizon} periods, window is {win}")
        if scen.horizon > win:
            scen = scen.window(0, win)
        ends = offset + win >= config.total
        net = build_network(apply_state(spec, state), win, n_step, scen,
                            storage_target=config.end_target if ends else config.window_target)
        if opts.mode == "deterministic" and scen.size > 1:
            raise ValueError("deterministic rolling needs single-scenario windows")
        problem = build_model(net, opts)
        out, plan = solve(problem, net, config.params)
        if plan is None:
            raise NoSolution(f"iteration {k + 1}: planning model has no solution", out.status)
        if out.status != "optimal":
            logger.warning("iteration %d: plan status %s, gap %.3g", k + 1, out.status, out.gap)
        fs = first_stage_of(plan, opts.mode, n_step)
        real = realized.window(offset, n_step)
        settled = {}
        for (mid, t), curve in fs.curves.items():
            m = net.market(mid)
            settled[(mid, t)] = settle_bids(curve, _realized_price(real, m, t), m.side)
        last = offset + n_step >= config.total
        cost, rec = recourse_evaluate(spec, fs, real, state,
                                      storage_target=config.end_target if last else "free",
                                      params=config.params)
        nxt = advance_state(rec, n_step, state)
        trace.iterations.append(RollIteration(k + 1, offset, win, n_step, out.status, float(plan.objective),
                                              cost, fs, settled, plan, rec, state, nxt))
        logger.info("iteration %d: window %d, planned %.2f, realized %.2f", k + 1, win, plan.objective, cost)
        state = nxt
    return trace


def _realized_price(real: ScenarioSet, market, t: int) -> float:
    p = market.price
    if isinstance(p, SeriesRef):
        return float(p.scale * real.matrix(p.name)[0, t])
    return float(p)

"""Reference computations that do not go through the bundled solver.

``enumerate_milp`` walks every assignment of the binary variables, drops
the ones that break a row touching only binaries, and solves the remaining
continuous LPs with scipy's HiGHS. Small specs and random problems used by
several test files live here too.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from dhnet.network import (
    DEMAND,
    SOURCE,
    STORAGE,
    UNIT,
    UNIT_WC,
    ConnectionSpec,
    Defaults,
    EnergyType,
    MarketSpec,
    SeriesRef,
    SystemSpec,
    VertexSpec,
)
from dhnet.scenario import Scenario, ScenarioSet
from dhnet.solver import MilpProblem

HEAT = [EnergyType("H", "heat"), EnergyType("NG", "natural gas"), EnergyType("EL", "electricity")]


def enumerate_milp(problem: MilpProblem) -> float:
    """Optimal objective by exhaustive enumeration (``inf`` if infeasible)."""
    A = problem.matrix().toarray()
    lo, hi = problem.row_bounds()
    c, lb, ub = problem.objective, problem.lb, problem.ub
    ints = np.flatnonzero(problem.integrality)
    cont = np.flatnonzero(~problem.integrality)
    ranges = [range(int(math.ceil(lb[j])), int(math.floor(ub[j])) + 1) for j in ints]
    combos = np.array(list(itertools.product(*ranges)), dtype=float).reshape(-1, len(ints))

    # rows with integer variables only are checked directly
    pure = np.all(A[:, cont] == 0, axis=1) if len(cont) else np.ones(len(A), bool)
    if pure.any():
        act = combos @ A[np.ix_(pure, ints)].T
        ok = np.all((act >= lo[pure] - 1e-9) & (act <= hi[pure] + 1e-9), axis=1)
        combos = combos[ok]

    mixed = ~pure
    Ac = A[np.ix_(mixed, cont)]
    Ai = A[np.ix_(mixed, ints)]
    lo_m, hi_m = lo[mixed], hi[mixed]
    eq = lo_m == hi_m
    up = ~eq & np.isfinite(hi_m)
    dn = ~eq & np.isfinite(lo_m)
    best = math.inf
    for y in combos:
        shift = Ai @ y
        fixed = float(c[ints] @ y)
        if not len(cont):
            if np.all(shift >= lo_m - 1e-9) and np.all(shift <= hi_m + 1e-9):
                best = min(best, fixed)
            continue
        A_ub = np.vstack([Ac[up], -Ac[dn]])
        b_ub = np.concatenate([hi_m[up] - shift[up], -(lo_m[dn] - shift[dn])])
        res = linprog(
            c[cont],
            A_ub=A_ub if len(A_ub) else None,
            b_ub=b_ub if len(A_ub) else None,
            A_eq=Ac[eq] if eq.any() else None,
            b_eq=(lo_m[eq] - shift[eq]) if eq.any() else None,
            bounds=list(zip(lb[cont], [None if math.isinf(u) else u for u in ub[cont]])),
            method="highs",
        )
        if res.status == 0:
            best = min(best, fixed + float(res.fun))
    return best + problem.obj_constant


def scenario_set(T, probs, seed=0, names=("gas", "heat", "price"), low=1.0, high=9.0) -> ScenarioSet:
    """Uniform random series for every name, one bundle per probability."""
    rng = np.random.default_rng(seed)
    return ScenarioSet("2021-01-04", [Scenario(p, {n: rng.uniform(low, high, T) for n in names}) for p in probs])


def random_milp(rng: np.random.Generator, n_bin: int, n_cont: int, n_rows: int) -> MilpProblem:
    """A feasible random MILP: covering rows with binary switches on the
    continuous variables and a few knapsack rows on the binaries."""
    p = MilpProblem("random")
    for j in range(n_cont):
        p.add_var(f"x{j:02d}", 0.0, float(rng.uniform(2, 10)), cost=float(rng.uniform(-2, 6)))
    for j in range(n_bin):
        p.add_var(f"y{j:02d}", binary=True, cost=float(rng.uniform(-3, 8)))
    for r in range(n_rows):
        cols = rng.choice(n_cont, size=min(3, n_cont), replace=False)
        coeffs = {int(j): float(rng.uniform(0.5, 2)) for j in cols}
        # covering demand that a binary can switch off
        k = n_cont + int(rng.integers(n_bin))
        coeffs[k] = float(rng.uniform(1, 4))
        p.add_constraint(coeffs, ">=", float(rng.uniform(1, 5)), tag="cover")
    for r in range(max(1, n_bin // 4)):
        cols = rng.choice(n_bin, size=min(4, n_bin), replace=False)
        p.add_constraint({n_cont + int(j): float(rng.uniform(1, 3)) for j in cols}, "<=",
                         float(rng.uniform(3, 6)), tag="knapsack")
    for j in range(n_bin):
        # a gated continuous variable: x <= U * y
        i = int(rng.integers(n_cont))
        p.add_constraint({i: 1.0, n_cont + j: -float(p.ub[i])}, "<=", 0.0, tag="gate")
    return p


def boiler_spec(missing_heat: bool = False, demand=5.0, efficiency=0.9, fuel_price=20.0) -> SystemSpec:
    """One gas source, one boiler and one heat demand site."""
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": math.inf}, outflow_price={"NG": fuel_price}),
        VertexSpec("u_GB", UNIT, inflow={"NG": 20.0}, outflow={"H": math.inf},
                   conversion={"NG->H": efficiency}),
        VertexSpec("d_H", DEMAND, inflow={"H": (demand, demand)}),
    ]
    C = [ConnectionSpec("e_NG", "u_GB", "NG"), ConnectionSpec("u_GB", "d_H", "H")]
    return SystemSpec("boiler", list(HEAT), V, C, [], Defaults(missing_heat=missing_heat))


def storage_spec(capacity=361.54, loss=0.01, initial=0.1, target=0.1, demand=None) -> SystemSpec:
    """Boiler feeding a demand site directly and through one storage."""
    demand = SeriesRef("heat") if demand is None else demand
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": math.inf}, outflow_price={"NG": SeriesRef("gas")}),
        VertexSpec("u_GB", UNIT, inflow={"NG": 30.0}, outflow={"H": math.inf}, conversion={"NG->H": 0.95},
                   outflow_price={"H": 2.0}),
        VertexSpec("s_1", STORAGE, energy="H", capacity=capacity, loss=loss, initial_level=initial,
                   target_level=target),
        VertexSpec("d_H", DEMAND, inflow={"H": (demand, demand)}),
    ]
    C = [ConnectionSpec(*c) for c in [("e_NG", "u_GB", "NG"), ("u_GB", "d_H", "H"), ("u_GB", "s_1", "H"),
                                      ("s_1", "d_H", "H")]]
    return SystemSpec("storage", list(HEAT), V, C, [], Defaults(),
                      uncertain={"price": ["gas"], "heat": ["heat"]})


def chp_market_spec(side: str = "selling", first_stage: bool = True, imbalance: bool = True) -> SystemSpec:
    """A CHP that sells power (or an electric boiler that buys it) and a gas boiler."""
    price = SeriesRef("price")
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": math.inf}, outflow_price={"NG": 25.0}),
        VertexSpec("u_GB", UNIT, inflow={"NG": 20.0}, outflow={"H": math.inf}, conversion={"NG->H": 0.9},
                   outflow_price={"H": 10.0}),
        VertexSpec("d_H", DEMAND, inflow={"H": (SeriesRef("heat"), SeriesRef("heat"))}),
    ]
    C = [("e_NG", "u_GB", "NG"), ("u_GB", "d_H", "H")]
    if side == "selling":
        V.append(VertexSpec("u_CHP", UNIT_WC, inflow={"NG": (4.0, 12.0)}, outflow={"H": (0, 6.0), "EL": (0, 5.0)},
                            conversion={"NG->H": 0.45, "NG->EL": 0.4}, start_cost=40.0, min_up=2,
                            first_stage=first_stage))
        C += [("e_NG", "u_CHP", "NG"), ("u_CHP", "d_H", "H"), ("u_CHP", "spot", "EL")]
    else:
        V.append(VertexSpec("u_EB", UNIT, inflow={"EL": 6.0}, outflow={"H": math.inf}, conversion={"EL->H": 0.99},
                            first_stage=first_stage))
        C += [("spot", "u_EB", "EL"), ("u_EB", "d_H", "H")]
    M = [MarketSpec("spot", side, "EL", price, penalty=600.0, imbalance=imbalance)]
    return SystemSpec(f"chp-{side}", list(HEAT), V, [ConnectionSpec(*c) for c in C], M, Defaults(),
                      uncertain={"price": ["price"], "heat": ["heat"]})


def wc_spec(**unit):
    """A cheap unit with commitment next to an expensive boiler."""
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": math.inf}, outflow_price={"NG": 10.0}),
        VertexSpec("u_A", UNIT_WC, inflow={"NG": (2.0, 10.0)}, outflow={"H": (0, 10.0)}, conversion={"NG->H": 1.0},
                   **unit),
        VertexSpec("u_GB", UNIT, inflow={"NG": 40.0}, outflow={"H": math.inf}, conversion={"NG->H": 0.5}),
        VertexSpec("d_H", DEMAND, inflow={"H": (SeriesRef("heat"), SeriesRef("heat"))}),
    ]
    C = [ConnectionSpec(*c) for c in [("e_NG", "u_A", "NG"), ("e_NG", "u_GB", "NG"), ("u_A", "d_H", "H"),
                                      ("u_GB", "d_H", "H")]]
    return SystemSpec("wc", list(HEAT), V, C, [], Defaults(missing_heat=False))


# -- checks on solved schedules, recomputed from the arc flows -------------

def conversion_residual(schedule) -> float:
    """Largest |out(g) - phi * in(f)| over units, conversion pairs, periods and
    scenarios, plus the pass-through balance of interconnections."""
    net = schedule.network
    worst = 0.0
    for v in net.spec.vertices:
        if v.is_unit:
            for (f, g), phi in v.conversion.items():
                r = schedule.outflow(v.id, g) - phi * schedule.inflow(v.id, f)
                worst = max(worst, float(np.abs(r).max()))
        elif v.kind == "interconnection":
            r = schedule.outflow(v.id, v.energy) - (1 - v.loss) * schedule.inflow(v.id, v.energy)
            worst = max(worst, float(np.abs(r).max()))
    return worst


def storage_residual(schedule) -> float:
    """Largest deviation from level[t] = (1 - loss) * level[t-1] + in[t] - out[t]."""
    net = schedule.network
    worst = 0.0
    for s in net.storages():
        level = schedule.storage_levels[s.id]
        inflow = np.zeros_like(level)
        outflow = np.zeros_like(level)
        for i in range(net.num_arcs):
            if net.role[i] != "flow":
                continue
            t, w = net.t_start[i], net.scenario[i]
            if net.target[i] == s.id:
                inflow[t, w] += schedule.flows[i]
            if net.source[i] == s.id:
                outflow[t, w] += schedule.flows[i]
        init = np.array([schedule.flows[i] for i in range(net.num_arcs)
                         if net.role[i] == "initial" and net.target[i] == s.id])
        prev = np.vstack([init[None, :], level[:-1]])
        r = level - ((1 - s.loss) * prev + inflow - outflow)
        worst = max(worst, float(np.abs(r).max()))
    return worst


def commitment_violations(schedule) -> list[str]:
    """Start/stop logic and minimum up/down runs of every unit with commitment."""
    net = schedule.network
    found = []
    for u in net.units():
        if not u.has_commitment:
            continue
        z, zs, ze = schedule.status[u.id], schedule.starts[u.id], schedule.stops[u.id]
        T, W = z.shape
        for w in range(W):
            prev = u.initial_status
            for t in range(T):
                if zs[t, w] and not (z[t, w] == 1 and prev == 0):
                    found.append(f"{u.id} start without switch-on at t={t} w={w}")
                if ze[t, w] and not (z[t, w] == 0 and prev == 1):
                    found.append(f"{u.id} stop without switch-off at t={t} w={w}")
                if zs[t, w] and ze[t, w]:
                    found.append(f"{u.id} starts and stops at t={t} w={w}")
                prev = z[t, w]
            # the window of a start at s covers s .. s + min_up, so the unit
            # stays on for min_up + 1 periods (cut at the horizon end)
            for t in range(T):
                for flag, dur, want in ((zs, u.min_up, 1), (ze, u.min_down, 0)):
                    if flag[t, w] and dur > 0:
                        run = z[t:min(T, t + dur + 1), w]
                        if np.any(run != want):
                            found.append(f"{u.id} run from t={t} w={w} shorter than {dur}")
    return found


def first_stage_spread(schedule) -> float:
    """Largest spread across scenarios of first-stage flows and statuses."""
    net = schedule.network
    worst = 0.0
    for i in net.first_stage_arcs():
        vals = schedule.flows[net.sibling_set(i)]
        worst = max(worst, float(vals.max() - vals.min()))
    for u in net.units():
        if u.has_commitment and u.first_stage:
            z = schedule.status[u.id][: net.first_stage]
            worst = max(worst, float((z.max(axis=1) - z.min(axis=1)).max(initial=0.0)))
    return worst


def bid_curve_problems(schedule, tol=1e-6) -> list[str]:
    """Monotonicity of every extracted curve and equal quantities at equal prices."""
    net = schedule.network
    found = []
    for (mid, t), curve in schedule.bid_curves.items():
        side = net.market(mid).side
        q = [c[1] for c in curve]
        pr = [c[0] for c in curve]
        if any(b <= a for a, b in zip(pr, pr[1:])):
            found.append(f"{mid} t={t}: prices not strictly increasing")
        bad = any(b < a for a, b in zip(q, q[1:])) if side == "selling" else any(b > a for a, b in zip(q, q[1:]))
        if bad:
            found.append(f"{mid} t={t}: {side} curve not monotone {curve}")
        prices = net.market_prices[mid][t]
        pos = schedule.market_positions[mid][t]
        for a in range(len(prices)):
            for b in range(a + 1, len(prices)):
                if abs(prices[a] - prices[b]) <= 1e-9 and abs(pos[a] - pos[b]) > tol:
                    found.append(f"{mid} t={t}: equal prices, positions {pos[a]} and {pos[b]}")
    return found


def bootstrap_mismatches(history, history_start, out, start, days, block_hours=4) -> list[tuple]:
    """Blocks of a bootstrap sample set that are not verbatim copies of a
    history day in the same slot, weekday/weekend class and pool half."""
    import pandas as pd

    history_start, start = pd.Timestamp(history_start), pd.Timestamp(start)
    n_days = len(next(iter(history.values()))) // 24
    split = n_days // 2
    first = (len(out.samples) + 1) // 2
    bad = []
    for i, s in enumerate(out.samples):
        half = range(0, split) if i < first else range(split, n_days)
        for d in range(days):
            weekend = (start + pd.Timedelta(days=d)).dayofweek >= 5
            pool = [h for h in half if ((history_start + pd.Timedelta(days=h)).dayofweek >= 5) == weekend]
            for b in range(24 // block_hours):
                at = slice(d * 24 + block_hours * b, d * 24 + block_hours * (b + 1))
                src = [slice(h * 24 + block_hours * b, h * 24 + block_hours * (b + 1)) for h in pool]
                if not any(all(np.array_equal(history[n][sl], s[n][at]) for n in history) for sl in src):
                    bad.append((i, d, b))
    return bad

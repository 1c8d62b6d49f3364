"""The dispatch MILP over a flow network.

Three modes share one base model:

* ``deterministic``: a single scenario, no coupling rows;
* ``operational``: commitment of first-stage units with commitment and
  flows leaving first-stage units are identical across scenarios within the
  first-stage periods;
* ``bidding``: day-ahead positions lie on a monotone price/quantity curve.

Bidding keeps the status coupling of operational mode and drops the flow
coupling. When every unit feeding a market is first stage and the market
has no imbalance vertices, the flow coupling already makes day-ahead
positions equal across scenarios, so any operational solution is a
(flat) bidding solution and the bidding optimum is no worse. The
``bidding_ready`` variant of ``synthetic.two_unit_system`` is such a
matched configuration.

Variable names are deterministic so a model can be exported and
cross-checked: ``x__<from>__<to>__<energy>__<t>__<t'>__<w>`` for flows and
``z__<unit>__<t>__<w>``, ``zs__...``, ``ze__...`` for status, start and stop.
Flow variable ``i`` always belongs to arc ``i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .network import CARRY, FLOW, INITIAL, INTERCONNECTION, STORAGE, TARGET, FlowNetwork
from .solver import MilpOutcome, MilpProblem, SolveParams, solve_milp

logger = logging.getLogger(__name__)

MODES = ("deterministic", "operational", "bidding")
PRICE_TOL = 1e-9
BID_TOL = 1e-9


@dataclass
class ModelOptions:
    mode: str = "deterministic"
    # "expected": x_a equals the probability-weighted mean of its siblings;
    # "pairwise": x_a equals the sibling in scenario 0; "none": no flow rows
    flow_nonanticipativity: str = "expected"
    # commitment coupling of first-stage units; None picks the mode default
    status_nonanticipativity: bool | None = None
    bid_markets: list[str] | None = None
    # "da" restricts bidding rows to the day-ahead vertex; "all" uses all three
    bid_vertices: str = "da"
    # "all" periods or only the "first-stage" periods
    bid_periods: str = "all"
    # "output": sum(out f') = phi * sum(in f); "input": phi * sum(out f') = sum(in f)
    transformation: str = "output"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.flow_nonanticipativity not in ("expected", "pairwise", "none"):
            raise ValueError("flow_nonanticipativity must be expected, pairwise or none")
        if self.bid_vertices not in ("da", "all"):
            raise ValueError("bid_vertices must be 'da' or 'all'")
        if self.bid_periods not in ("all", "first-stage"):
            raise ValueError("bid_periods must be 'all' or 'first-stage'")
        if self.transformation not in ("output", "input"):
            raise ValueError("transformation must be 'output' or 'input'")

    @property
    def couple_status(self) -> bool:
        if self.status_nonanticipativity is None:
            return self.mode == "operational"
        return self.status_nonanticipativity


def _z(kind: str, u: str, t: int, w: int) -> str:
    return f"{kind}__{u}__{t}__{w}"


def _flow_arcs(net: FlowNetwork, idx: list[int]) -> list[int]:
    return [i for i in idx if net.role[i] == FLOW]


def _add_bound_rows(p: MilpProblem, coeffs: dict, lo: float, hi: float, name: str, tag: str) -> None:
    if lo == hi:
        p.add_constraint(coeffs, "==", lo, name=name, tag=tag)
        return
    if lo > 0:
        p.add_constraint(coeffs, ">=", lo, name=f"{name}__lo", tag=tag)
    if math.isfinite(hi):
        p.add_constraint(coeffs, "<=", hi, name=f"{name}__hi", tag=tag)


def build_base(network: FlowNetwork, options: ModelOptions | None = None) -> MilpProblem:
    """Flow variables, transformation, vertex bound and ramp rows."""
    opt = options or ModelOptions()
    net = network
    T, W = net.horizon, net.n_scenarios
    p = MilpProblem(f"{net.spec.name}")
    for i in range(net.num_arcs):
        p.add_var(net.arc_name(i), net.lower[i], net.upper[i], cost=net.cost[i])
    p.obj_constant = net.obj_constant

    for v in net.spec.vertices:
        if v.is_unit:
            for (f, g), phi in sorted(v.conversion.items()):
                for w in range(W):
                    for t in range(T):
                        outs = net.outgoing(v.id, g, t, w)
                        ins = net.incoming(v.id, f, t, w)
                        if opt.transformation == "output":
                            coeffs = [(i, 1.0) for i in outs] + [(i, -phi) for i in ins]
                        else:
                            coeffs = [(i, phi) for i in outs] + [(i, -1.0) for i in ins]
                        p.add_constraint(coeffs, "==", 0.0, name=f"conv__{v.id}__{f}__{g}__{t}__{w}",
                                         tag="transformation")
        elif v.kind == INTERCONNECTION:
            keep = 1.0 - v.loss
            for w in range(W):
                for t in range(T):
                    coeffs = [(i, 1.0) for i in net.outgoing(v.id, v.energy, t, w)]
                    coeffs += [(i, -keep) for i in net.incoming(v.id, v.energy, t, w)]
                    p.add_constraint(coeffs, "==", 0.0, name=f"conv__{v.id}__{v.energy}__{t}__{w}",
                                     tag="transformation")
        elif v.kind == STORAGE:
            keep = 1.0 - v.loss
            f = v.energy
            for w in range(W):
                for t in range(T):
                    coeffs = [(i, 1.0) for i in net.outgoing(v.id, f, t, w)]
                    for i in net.incoming(v.id, f, t, w):
                        coeffs.append((i, -keep if net.role[i] in (CARRY, INITIAL) else -1.0))
                    p.add_constraint(coeffs, "==", 0.0, name=f"store__{v.id}__{t}__{w}", tag="storage-balance")

    # vertex in/out bounds; single-arc buckets fold into the variable bounds
    for (vid, side, f), (lo_arr, hi_arr) in sorted(net.vertex_bounds.items()):
        v = net.vertices[vid]
        if v.has_commitment or v.artificial:
            continue
        tag = "inflow-bound" if side == "in" else "outflow-bound"
        lookup = net.incoming if side == "in" else net.outgoing
        for w in range(W):
            for t in range(T):
                lo, hi = float(lo_arr[t, w]), float(hi_arr[t, w])
                if lo <= 0.0 and math.isinf(hi):
                    continue
                arcs = _flow_arcs(net, lookup(vid, f, t, w))
                if len(arcs) == 1:
                    j = arcs[0]
                    lb, ub = p.bounds(j)
                    p.set_bounds(j, max(lb, lo), min(ub, hi))
                    continue
                _add_bound_rows(p, {i: 1.0 for i in arcs}, lo, hi,
                                f"{side}__{vid}__{f}__{t}__{w}", tag)

    if net.storage_target == "soft":
        for s in net.storages():
            d_star = f"target*_{s.id}"
            for w in range(W):
                arcs = net.incoming(d_star, s.energy, T - 1, w)
                p.add_constraint({i: 1.0 for i in arcs}, ">=", s.target_level,
                                 name=f"target__{s.id}__{w}", tag="storage-target")

    for u in net.units():
        if u.has_commitment:
            continue
        for f, limit in sorted(u.ramp_up.items()):
            _ramp_rows(p, net, u, f, limit, up=True)
        for f, limit in sorted(u.ramp_down.items()):
            _ramp_rows(p, net, u, f, limit, up=False)
    return p


def _ramp_rows(p: MilpProblem, net: FlowNetwork, u, f: str, limit: float, up: bool) -> None:
    sign = 1.0 if up else -1.0
    init = u.initial_output.get(f, 0.0)
    tag = "ramp-up" if up else "ramp-down"
    for w in range(net.n_scenarios):
        for t in range(net.horizon):
            coeffs = {i: sign for i in net.outgoing(u.id, f, t, w)}
            if t > 0:
                for i in net.outgoing(u.id, f, t - 1, w):
                    coeffs[i] = coeffs.get(i, 0.0) - sign
                rhs = limit
            else:
                rhs = limit + sign * init
            p.add_constraint(coeffs, "<=", rhs, name=f"{tag}__{u.id}__{f}__{t}__{w}", tag=tag)


def add_commitment(problem: MilpProblem, network: FlowNetwork) -> None:
    """Status, start and stop binaries with their logic rows."""
    p, net = problem, network
    T, W = net.horizon, net.n_scenarios
    units = [u for u in net.units() if u.has_commitment]
    for u in units:
        for w in range(W):
            for t in range(T):
                p.add_var(_z("z", u.id, t, w), binary=True)
                p.add_var(_z("zs", u.id, t, w), binary=True, cost=net.probs[w] * u.start_cost)
                p.add_var(_z("ze", u.id, t, w), binary=True)

    def z(kind, u, t, w):
        return p.var(_z(kind, u, t, w))

    for u in units:
        B = int(u.initial_status)
        hold = int(u.initial_hold)
        if hold > T:
            logger.warning("unit %s: initial hold of %d periods exceeds the horizon; status fixed throughout",
                           u.id, hold)
        for w in range(W):
            for t in range(T):
                coeffs = {z("zs", u.id, t, w): 1.0, z("ze", u.id, t, w): -1.0, z("z", u.id, t, w): -1.0}
                rhs = 0.0
                if t > 0:
                    coeffs[z("z", u.id, t - 1, w)] = 1.0
                else:
                    rhs = -float(B)
                p.add_constraint(coeffs, "==", rhs, name=f"status__{u.id}__{t}__{w}", tag="status-transition")
                p.add_constraint({z("zs", u.id, t, w): 1.0, z("ze", u.id, t, w): 1.0}, "<=", 1.0,
                                 name=f"startstop__{u.id}__{t}__{w}", tag="start-stop-exclusion")
            for t in range(min(hold, T)):
                p.add_constraint({z("z", u.id, t, w): 1.0}, "==", float(B),
                                 name=f"initial__{u.id}__{t}__{w}", tag="initial-status")
            # window rows run over t = T^B .. |T| (1-based); period 0 is the pre-horizon state
            first = max(hold - 1, 0)
            if u.min_up > 0:
                for t in range(first, T):
                    coeffs = {z("zs", u.id, k, w): 1.0 for k in range(max(0, t - u.min_up), t + 1)}
                    coeffs[z("z", u.id, t, w)] = coeffs.get(z("z", u.id, t, w), 0.0) - 1.0
                    p.add_constraint(coeffs, "<=", 0.0, name=f"minup__{u.id}__{t}__{w}", tag="min-up")
            if u.min_down > 0:
                for t in range(first, T):
                    coeffs = {z("ze", u.id, k, w): 1.0 for k in range(max(0, t - u.min_down), t + 1)}
                    coeffs[z("z", u.id, t, w)] = 1.0
                    p.add_constraint(coeffs, "<=", 1.0, name=f"mindown__{u.id}__{t}__{w}", tag="min-down")

    done = set()
    for u in units:
        for other in u.excludes:
            for w in range(W):
                for t in range(T):
                    key = (min(u.id, other), max(u.id, other), t, w)
                    if key not in done:
                        done.add(key)
                        p.add_constraint({z("z", u.id, t, w): 1.0, z("z", other, t, w): 1.0}, "<=", 1.0,
                                         name=f"exclude__{key[0]}__{key[1]}__{t}__{w}", tag="exclusion")
                    p.add_constraint({z("zs", u.id, t, w): 1.0, z("ze", other, t, w): 1.0}, "<=", 1.0,
                                     name=f"exclude_ss__{u.id}__{other}__{t}__{w}", tag="exclusion")
        for other in u.depends:
            for w in range(W):
                for t in range(T):
                    p.add_constraint({z("z", u.id, t, w): 1.0, z("z", other, t, w): -1.0}, "==", 0.0,
                                     name=f"depend__{u.id}__{other}__{t}__{w}", tag="dependency")

    for u in units:
        for side in ("in", "out"):
            tag = "inflow-bound" if side == "in" else "outflow-bound"
            lookup = net.incoming if side == "in" else net.outgoing
            bounds = u.inflow if side == "in" else u.outflow
            for f in sorted(bounds):
                lo_arr, hi_arr = net.vertex_bounds[(u.id, side, f)]
                for w in range(W):
                    for t in range(T):
                        coeffs = {i: 1.0 for i in lookup(u.id, f, t, w)}
                        zi = z("z", u.id, t, w)
                        lo, hi = float(lo_arr[t, w]), float(hi_arr[t, w])
                        up = dict(coeffs)
                        up[zi] = -hi
                        p.add_constraint(up, "<=", 0.0, name=f"{side}__{u.id}__{f}__{t}__{w}__hi", tag=tag)
                        if lo > 0:
                            down = dict(coeffs)
                            down[zi] = -lo
                            p.add_constraint(down, ">=", 0.0, name=f"{side}__{u.id}__{f}__{t}__{w}__lo", tag=tag)
        B = float(u.initial_status)
        for f, limit in sorted(u.ramp_up.items()):
            lo_arr = net.vertex_bounds[(u.id, "out", f)][0]
            init = u.initial_output.get(f, 0.0)
            for w in range(W):
                for t in range(T):
                    coeffs = {i: 1.0 for i in net.outgoing(u.id, f, t, w)}
                    coeffs[z("zs", u.id, t, w)] = -float(lo_arr[t, w])
                    if t > 0:
                        for i in net.outgoing(u.id, f, t - 1, w):
                            coeffs[i] = coeffs.get(i, 0.0) - 1.0
                        coeffs[z("z", u.id, t - 1, w)] = -limit
                        rhs = 0.0
                    else:
                        rhs = init + limit * B
                    p.add_constraint(coeffs, "<=", rhs, name=f"ramp-up__{u.id}__{f}__{t}__{w}", tag="ramp-up")
        for f, limit in sorted(u.ramp_down.items()):
            lo_arr = net.vertex_bounds[(u.id, "out", f)][0]
            init = u.initial_output.get(f, 0.0)
            for w in range(W):
                for t in range(T):
                    coeffs = {i: -1.0 for i in net.outgoing(u.id, f, t, w)}
                    coeffs[z("z", u.id, t, w)] = -limit
                    coeffs[z("ze", u.id, t, w)] = -float(lo_arr[t, w])
                    if t > 0:
                        for i in net.outgoing(u.id, f, t - 1, w):
                            coeffs[i] = coeffs.get(i, 0.0) + 1.0
                        rhs = 0.0
                    else:
                        rhs = -init
                    p.add_constraint(coeffs, "<=", rhs, name=f"ramp-down__{u.id}__{f}__{t}__{w}", tag="ramp-down")


def add_nonanticipativity(problem: MilpProblem, network: FlowNetwork, flow_form: str = "expected",
                          status: bool = True) -> None:
    """Couple first-stage decisions across scenarios."""
    p, net = problem, network
    W = net.n_scenarios
    if W < 2:
        return
    if status:
        for u in net.units():
            if not (u.has_commitment and u.first_stage):
                continue
            for t in range(net.first_stage):
                base = p.var(_z("z", u.id, t, 0))
                for w in range(1, W):
                    p.add_constraint({p.var(_z("z", u.id, t, w)): 1.0, base: -1.0}, "==", 0.0,
                                     name=f"na_z__{u.id}__{t}__{w}", tag="na-status")
    if flow_form == "none":
        return
    seen = set()
    for i in network.first_stage_arcs():
        group = tuple(net.sibling_set(i))
        if group in seen:
            continue
        seen.add(group)
        a0 = group[0]
        key = f"{net.source[a0]}__{net.target[a0]}__{net.energy[a0]}__{net.t_start[a0]}"
        if flow_form == "pairwise":
            for a in group[1:]:
                p.add_constraint({a: 1.0, a0: -1.0}, "==", 0.0, name=f"na_x__{key}__{net.scenario[a]}",
                                 tag="na-flow")
        else:
            for a in group:
                coeffs = {b: -net.probs[net.scenario[b]] for b in group}
                coeffs[a] += 1.0
                p.add_constraint(coeffs, "==", 0.0, name=f"na_x__{key}__{net.scenario[a]}", tag="na-flow")


def market_position_coeffs(network: FlowNetwork, market, vertex: str, t: int, w: int) -> dict[int, float]:
    """Net position of a market vertex: inflow minus outflow for selling
    markets, outflow minus inflow for buying markets."""
    net = network
    f = market.energy
    sign = 1.0 if market.side == "selling" else -1.0
    coeffs: dict[int, float] = {}
    for i in net.incoming(vertex, f, t, w):
        coeffs[i] = coeffs.get(i, 0.0) + sign
    for i in net.outgoing(vertex, f, t, w):
        coeffs[i] = coeffs.get(i, 0.0) - sign
    return coeffs


def price_levels(prices: np.ndarray, tol: float = PRICE_TOL) -> list[list[int]]:
    """Scenario indices grouped by equal price, groups in ascending price order."""
    order = sorted(range(len(prices)), key=lambda w: (prices[w], w))
    groups: list[list[int]] = []
    for w in order:
        if groups and abs(prices[w] - prices[groups[-1][0]]) <= tol:
            groups[-1].append(w)
        else:
            groups.append([w])
    return groups


def add_bidding_curves(problem: MilpProblem, network: FlowNetwork, markets: list[str] | None = None,
                       vertices: str = "da", periods: str = "all") -> None:
    """Monotone bid-curve rows on day-ahead positions."""
    p, net = problem, network
    T = net.horizon if periods == "all" else net.first_stage
    for m in net.spec.markets:
        if markets is not None and m.id not in markets:
            continue
        members = [m.da] if vertices == "da" else [x for x in m.members if x in net.vertices]
        prices = net.market_prices[m.id]
        for v in members:
            for t in range(T):
                levels = price_levels(prices[t])
                pos = {w: market_position_coeffs(net, m, v, t, w) for w in range(net.n_scenarios)}

                def diff(a, b):
                    c = dict(pos[a])
                    for i, val in pos[b].items():
                        c[i] = c.get(i, 0.0) - val
                    return c

                for g in levels:
                    for w in g[1:]:
                        p.add_constraint(diff(w, g[0]), "==", 0.0, name=f"bid_eq__{m.id}__{v}__{t}__{w}",
                                         tag="bid-equal")
                for lo_g, hi_g in zip(levels, levels[1:]):
                    a, b = lo_g[0], hi_g[0]
                    # selling: quantity at the lower price <= quantity at the higher price
                    c = diff(a, b) if m.side == "selling" else diff(b, a)
                    p.add_constraint(c, "<=", 0.0, name=f"bid_ord__{m.id}__{v}__{t}__{a}__{b}", tag="bid-order")


def build_model(network: FlowNetwork, options: ModelOptions | None = None) -> MilpProblem:
    opt = options or ModelOptions()
    if opt.mode == "deterministic" and network.n_scenarios != 1:
        raise ValueError("deterministic mode needs exactly one scenario")
    p = build_base(network, opt)
    add_commitment(p, network)
    if opt.mode == "operational":
        add_nonanticipativity(p, network, opt.flow_nonanticipativity, opt.couple_status)
    elif opt.mode == "bidding":
        if opt.couple_status:
            add_nonanticipativity(p, network, "none", True)
        add_bidding_curves(p, network, opt.bid_markets, opt.bid_vertices, opt.bid_periods)
    return p


# ---------------------------------------------------------------------------
# schedules


@dataclass
class DispatchSchedule:
    network: FlowNetwork
    flows: np.ndarray
    objective: float
    scenario_costs: np.ndarray
    status: dict[str, np.ndarray] = field(default_factory=dict)
    starts: dict[str, np.ndarray] = field(default_factory=dict)
    stops: dict[str, np.ndarray] = field(default_factory=dict)
    storage_levels: dict[str, np.ndarray] = field(default_factory=dict)
    market_positions: dict[str, np.ndarray] = field(default_factory=dict)
    bid_curves: dict[tuple[str, int], list[tuple[float, float]]] = field(default_factory=dict)
    solve_status: str = "optimal"
    gap: float = 0.0

    def _sum(self, idx: list[int]) -> float:
        return float(self.flows[idx].sum()) if idx else 0.0

    def outflow(self, v: str, f: str) -> np.ndarray:
        net = self.network
        return np.array([[self._sum(net.outgoing(v, f, t, w)) for w in range(net.n_scenarios)]
                         for t in range(net.horizon)])

    def inflow(self, v: str, f: str) -> np.ndarray:
        net = self.network
        return np.array([[self._sum(net.incoming(v, f, t, w)) for w in range(net.n_scenarios)]
                         for t in range(net.horizon)])

    def flow(self, source: str, target: str, f: str) -> np.ndarray:
        """Flow on the arcs ``source -> target`` as an array (T, W)."""
        net = self.network
        out = np.zeros((net.horizon, net.n_scenarios))
        for t in range(net.horizon):
            for w in range(net.n_scenarios):
                for i in net.outgoing(source, f, t, w):
                    if net.target[i] == target:
                        out[t, w] += self.flows[i]
        return out

    def heat_delivered(self) -> np.ndarray:
        """Heat into non-market demand sites per scenario, shape (W,)."""
        net = self.network
        f = net.spec.defaults.heat_energy
        markets = {x for m in net.spec.markets for x in m.members}
        total = np.zeros(net.n_scenarios)
        for v in net.spec.vertices:
            if v.kind == "demand" and v.id not in markets and f in v.inflow:
                total += self.inflow(v.id, f).sum(axis=0)
        return total

    def heat_by_source(self) -> dict[str, np.ndarray]:
        """Heat each vertex sends to non-market demand sites, per scenario."""
        net = self.network
        f = net.spec.defaults.heat_energy
        markets = {x for m in net.spec.markets for x in m.members}
        sites = {v.id for v in net.spec.vertices
                 if v.kind == "demand" and v.id not in markets and f in v.inflow}
        out: dict[str, np.ndarray] = {}
        for i in range(net.num_arcs):
            if net.energy[i] == f and net.target[i] in sites and net.role[i] == FLOW:
                arr = out.setdefault(net.source[i], np.zeros(net.n_scenarios))
                arr[net.scenario[i]] += self.flows[i]
        return out

    def market_net(self) -> np.ndarray:
        """Day-ahead net position summed over periods and markets, per scenario.

        Positive values are sales for selling markets and purchases for buying
        markets; the sign is normalised so that sales count positive.
        """
        net = self.network
        total = np.zeros(net.n_scenarios)
        for m in net.spec.markets:
            sign = 1.0 if m.side == "selling" else -1.0
            total += sign * self.market_positions[m.id].sum(axis=0)
        return total

    def market_income(self) -> np.ndarray:
        """Day-ahead revenue minus purchases, per scenario.

        Sales to non-market sinks of other energies than heat (fixed-price
        offtake) count at their configured price, entered as a negative
        inflow price.
        """
        net = self.network
        total = np.zeros(net.n_scenarios)
        for m in net.spec.markets:
            sign = 1.0 if m.side == "selling" else -1.0
            total += sign * (net.market_prices[m.id] * self.market_positions[m.id]).sum(axis=0)
        markets = {x for m in net.spec.markets for x in m.members}
        heat = net.spec.defaults.heat_energy
        for v in net.spec.vertices:
            if v.kind != "demand" or v.id in markets or v.artificial:
                continue
            for f in v.inflow:
                price = net.prices.get((v.id, "in", f))
                if f != heat and price is not None:
                    total -= (price * self.inflow(v.id, f)).sum(axis=0)
        return total

    def imbalance(self) -> np.ndarray:
        """Energy through the imbalance vertices, per scenario."""
        net = self.network
        total = np.zeros(net.n_scenarios)
        for m in net.spec.markets:
            for v in (m.bmb, m.bms):
                for i in range(net.num_arcs):
                    if net.role[i] == FLOW and v in (net.source[i], net.target[i]):
                        total[net.scenario[i]] += self.flows[i]
        return total

    def imbalance_cost(self) -> np.ndarray:
        net = self.network
        total = np.zeros(net.n_scenarios)
        for m in net.spec.markets:
            for v in (m.bmb, m.bms):
                for i in range(net.num_arcs):
                    if net.role[i] == FLOW and v in (net.source[i], net.target[i]):
                        total[net.scenario[i]] += m.penalty * self.flows[i]
        return total

    def rows(self):
        """Long-format records (kind, name, energy, t, w, value)."""
        net = self.network
        for i in range(net.num_arcs):
            yield ("flow", f"{net.source[i]}->{net.target[i]}", net.energy[i], int(net.t_start[i]),
                   int(net.scenario[i]), float(self.flows[i]))
        for kind, table in (("status", self.status), ("start", self.starts), ("stop", self.stops)):
            for u in sorted(table):
                arr = table[u]
                for t in range(arr.shape[0]):
                    for w in range(arr.shape[1]):
                        yield (kind, u, "", t, w, float(arr[t, w]))
        for s in sorted(self.storage_levels):
            arr = self.storage_levels[s]
            for t in range(arr.shape[0]):
                for w in range(arr.shape[1]):
                    yield ("level", s, net.vertices[s].energy, t, w, float(arr[t, w]))
        for m in sorted(self.market_positions):
            arr = self.market_positions[m]
            for t in range(arr.shape[0]):
                for w in range(arr.shape[1]):
                    yield ("position", m, net.market(m).energy, t, w, float(arr[t, w]))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("kind,name,energy,t,w,value\n")
            for kind, name, f, t, w, v in self.rows():
                fh.write(f"{kind},{name},{f},{t},{w},{v!r}\n")


def bid_curve(prices: np.ndarray, positions: np.ndarray, side: str) -> list[tuple[float, float]]:
    """One (price, quantity) step per distinct scenario price, ascending price.

    Quantities are read from the scenario attaining each price. Residual
    solver noise between levels is removed by a running max (selling) or
    min (buying) so the curve is exactly monotone.
    """
    steps = []
    for g in price_levels(prices):
        steps.append((float(prices[g[0]]), float(positions[g[0]])))
    q = np.array([s[1] for s in steps])
    q = np.maximum.accumulate(q) if side == "selling" else np.minimum.accumulate(q)
    return [(pr, float(v)) for (pr, _), v in zip(steps, q)]


def extract_schedule(problem: MilpProblem, network: FlowNetwork, x: np.ndarray | None,
                     status: str = "optimal", gap: float = 0.0, bids: bool | None = None) -> DispatchSchedule:
    if x is None:
        raise ValueError(f"no solution to extract (status {status})")
    net = network
    T, W = net.horizon, net.n_scenarios
    x = np.asarray(x, dtype=float)
    flows = x[: net.num_arcs].copy()
    status_map, starts, stops = {}, {}, {}
    start_cost = np.zeros(W)
    for u in net.units():
        if not u.has_commitment:
            continue
        for kind, table in (("z", status_map), ("zs", starts), ("ze", stops)):
            arr = np.zeros((T, W))
            for t in range(T):
                for w in range(W):
                    arr[t, w] = round(x[problem.var(_z(kind, u.id, t, w))])
            table[u.id] = arr
        start_cost += u.start_cost * starts[u.id].sum(axis=0)
    levels = {}
    for s in net.storages():
        arr = np.zeros((T, W))
        for t in range(T):
            for w in range(W):
                arr[t, w] = sum(flows[i] for i in net.outgoing(s.id, s.energy, t, w)
                                if net.role[i] in (CARRY, TARGET))
        levels[s.id] = arr
    positions = {}
    for m in net.spec.markets:
        arr = np.zeros((T, W))
        for t in range(T):
            for w in range(W):
                arr[t, w] = sum(flows[i] * c for i, c in market_position_coeffs(net, m, m.da, t, w).items())
        positions[m.id] = arr
    curves = {}
    if bids is None:
        bids = W > 1
    if bids:
        for m in net.spec.markets:
            for t in range(T):
                curves[(m.id, t)] = bid_curve(net.market_prices[m.id][t], positions[m.id][t], m.side)
    arc_cost = np.zeros(W)
    np.add.at(arc_cost, net.scenario, net.cost * flows)
    extra = 0.0
    n_flow = net.num_arcs
    # other continuous variables (none in the standard model) are charged to the objective only
    if problem.num_vars > n_flow:
        c = problem.objective
        zs_idx = {problem.var(_z("zs", u.id, t, w)) for u in net.units() if u.has_commitment
                  for t in range(T) for w in range(W)}
        rest = [j for j in range(n_flow, problem.num_vars) if j not in zs_idx]
        extra = float(c[rest] @ x[rest]) if rest else 0.0
    scen = arc_cost / net.probs + start_cost + net.scenario_constant
    objective = problem.objective_value(x)
    if abs(float(net.probs @ scen) + extra - objective) > 1e-6 * max(1.0, abs(objective)):
        logger.warning("scenario cost decomposition differs from the objective by %.3g",
                       float(net.probs @ scen) + extra - objective)
    return DispatchSchedule(net, flows, objective, scen, status_map, starts, stops, levels, positions, curves,
                            status, gap)


class NoSolution(RuntimeError):
    """A model solve that ended without any feasible solution."""

    def __init__(self, message: str, status: str):
        super().__init__(f"{message} ({status})")
        self.status = status


def solve(problem: MilpProblem, network: FlowNetwork, params: SolveParams | None = None,
          bids: bool | None = None) -> tuple[MilpOutcome, DispatchSchedule | None]:
    out = solve_milp(problem, params or SolveParams())
    if out.x is None:
        return out, None
    return out, extract_schedule(problem, network, out.x, out.status, out.gap, bids)


# ---------------------------------------------------------------------------
# first-stage decisions


def settle_bids(curve: list[tuple[float, float]], price: float, side: str = "selling",
                tol: float = BID_TOL) -> float:
    """Quantity accepted at ``price``.

    Selling: the highest-priced step whose price is at most the realized
    price. Buying: the lowest-priced step whose price is at least the
    realized price. A step priced exactly at the realized price (within
    ``tol``) is accepted. Returns 0 when no step clears.
    """
    steps = sorted(curve)
    prices = [s[0] for s in steps]
    qty = [s[1] for s in steps]
    if any(b - a < 0 for a, b in zip(prices, prices[1:])):
        raise ValueError("bid curve prices must be sorted")
    diffs = np.diff(qty)
    if side == "selling":
        if np.any(diffs < 0):
            raise ValueError("selling curve must be non-decreasing in price")
        ok = [i for i, pr in enumerate(prices) if pr <= price + tol]
        return float(qty[ok[-1]]) if ok else 0.0
    if side == "buying":
        if np.any(diffs > 0):
            raise ValueError("buying curve must be non-increasing in price")
        ok = [i for i, pr in enumerate(prices) if pr >= price - tol]
        return float(qty[ok[0]]) if ok else 0.0
    raise ValueError(f"unknown market side {side!r}")


@dataclass
class FirstStage:
    """Here-and-now decisions of a solved plan.

    ``statuses`` maps (unit, t) to the commitment of first-stage units with
    commitment; ``flows`` maps (from, to, energy, t) to the flow on arcs
    leaving first-stage units; ``curves`` maps (market, t) to bid curves.
    Only periods below ``periods`` are covered.
    """

    mode: str
    periods: int
    statuses: dict[tuple[str, int], float] = field(default_factory=dict)
    flows: dict[tuple[str, str, str, int], float] = field(default_factory=dict)
    curves: dict[tuple[str, int], list[tuple[float, float]]] = field(default_factory=dict)


def first_stage_of(schedule: DispatchSchedule, mode: str, periods: int | None = None) -> FirstStage:
    net = schedule.network
    periods = net.first_stage if periods is None else periods
    fs = FirstStage(mode, periods)
    if mode == "bidding":
        for m in net.spec.markets:
            for t in range(periods):
                curve = schedule.bid_curves.get((m.id, t))
                if curve is None:
                    curve = bid_curve(net.market_prices[m.id][t], schedule.market_positions[m.id][t], m.side)
                fs.curves[(m.id, t)] = curve
        return fs
    w0 = 0
    for u in net.units():
        if not u.first_stage:
            continue
        if u.has_commitment:
            for t in range(periods):
                fs.statuses[(u.id, t)] = float(schedule.status[u.id][t, w0])
        for t in range(periods):
            for f in u.output_energies():
                for i in net.outgoing(u.id, f, t, w0):
                    if net.role[i] != FLOW:
                        continue
                    key = (u.id, net.target[i], f, t)
                    # probability-weighted value; equal across scenarios when coupled
                    sib = net.sibling_set(i)
                    fs.flows[key] = float(sum(net.probs[net.scenario[j]] * schedule.flows[j] for j in sib))
    return fs


def fix_first_stage(problem: MilpProblem, network: FlowNetwork, fs: FirstStage, tol: float = 1e-9) -> None:
    """Pin ``fs`` in every scenario of ``problem``.

    Commitments and first-stage flows are fixed through variable bounds;
    in bidding mode the day-ahead position of each scenario is pinned to
    the quantity the curve clears at that scenario's price.
    """
    net = network
    T = min(fs.periods, net.horizon)
    for (u, t), val in fs.statuses.items():
        if t >= T:
            continue
        for w in range(net.n_scenarios):
            j = problem.var(_z("z", u, t, w))
            problem.fix(j, round(val))
    for (a, b, f, t), val in fs.flows.items():
        if t >= T:
            continue
        for w in range(net.n_scenarios):
            for i in net.outgoing(a, f, t, w):
                if net.target[i] == b:
                    v = min(max(val, net.lower[i]), net.upper[i])
                    if abs(v - val) > 1e-6:
                        logger.warning("first-stage flow %s->%s t=%d clipped from %g to %g", a, b, t, val, v)
                    problem.fix(i, v)
    for (mid, t), curve in fs.curves.items():
        if t >= T:
            continue
        m = net.market(mid)
        for w in range(net.n_scenarios):
            q = settle_bids(curve, float(net.market_prices[mid][t, w]), m.side)
            problem.add_constraint(market_position_coeffs(net, m, m.da, t, w), "==", q,
                                   name=f"settled__{mid}__{t}__{w}", tag="settled-position")

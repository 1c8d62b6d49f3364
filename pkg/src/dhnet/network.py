"""System description and the time/scenario-expanded flow network.

A :class:`SystemSpec` lists energy types, vertices (sources, demand sites,
storages, interconnections and production units), the connections between
them and electricity markets. :func:`build_network` expands it over a
planning horizon and a scenario set into arcs ``(from, to, energy, t, t', w)``
with cost and bounds. Periods and scenarios are 0-based throughout.

Parameters that vary over time or scenario are written as a
:class:`SeriesRef` naming a quantity carried by the scenario bundles; plain
numbers are broadcast.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Union

import numpy as np

if TYPE_CHECKING:
    from .scenario import ScenarioSet

INF = math.inf

SOURCE = "source"
DEMAND = "demand"
STORAGE = "storage"
INTERCONNECTION = "interconnection"
UNIT = "unit"
UNIT_WC = "unit-with-commitment"
KINDS = (SOURCE, DEMAND, STORAGE, INTERCONNECTION, UNIT, UNIT_WC)

# permitted (from-kind, to-kind) pairs for ordinary arcs
_UNITS = (UNIT, UNIT_WC)
CATALOGUE = frozenset(
    [(SOURCE, k) for k in (*_UNITS, STORAGE, DEMAND, INTERCONNECTION)]
    + [(u, k) for u in _UNITS for k in (STORAGE, DEMAND, *_UNITS, INTERCONNECTION)]
    + [(STORAGE, DEMAND), (STORAGE, INTERCONNECTION)]
    + [(INTERCONNECTION, k) for k in (STORAGE, DEMAND, INTERCONNECTION)]
)

# arc roles
FLOW = "flow"
CARRY = "carry"
INITIAL = "initial"
TARGET = "target"
SHORTFALL = "shortfall"


@dataclass(frozen=True)
class SeriesRef:
    """Reference to a scenario quantity, optionally scaled."""

    name: str
    scale: float = 1.0

    _PATTERN = re.compile(r"^\s*(?:([-+]?[0-9.eE+-]+)\s*\*\s*|(-))?\s*([A-Za-z_][\w.\-]*)\s*$")

    @classmethod
    def parse(cls, text: str) -> "SeriesRef":
        m = cls._PATTERN.match(text)
        if not m:
            raise ValueError(f"cannot read series reference {text!r}")
        factor, minus, name = m.groups()
        scale = float(factor) if factor else (-1.0 if minus else 1.0)
        return cls(name, scale)

    def __str__(self) -> str:
        if self.scale == 1.0:
            return self.name
        if self.scale == -1.0:
            return f"-{self.name}"
        return f"{self.scale!r}*{self.name}"


Param = Union[float, SeriesRef]


def as_param(value) -> Param:
    if isinstance(value, SeriesRef):
        return value
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("inf", "+inf", ".inf", "unlimited"):
            return INF
        if low in ("-inf", "-.inf"):
            return -INF
        try:
            return float(value)
        except ValueError:
            return SeriesRef.parse(value)
    if value is None:
        return INF
    return float(value)


def _bounds(mapping) -> dict[str, tuple[Param, Param]]:
    out = {}
    for f, b in (mapping or {}).items():
        if isinstance(b, (list, tuple)):
            if len(b) != 2:
                raise ValueError(f"bound for {f!r} needs two entries")
            lo, hi = as_param(b[0]), as_param(b[1])
        else:
            # a single figure is an upper bound
            lo, hi = 0.0, as_param(b)
        out[str(f)] = (lo, hi)
    return out


def _conversion(mapping) -> dict[tuple[str, str], float]:
    out = {}
    for key, v in (mapping or {}).items():
        if isinstance(key, str):
            parts = [p.strip() for p in key.split("->")]
            if len(parts) != 2:
                raise ValueError(f"conversion key {key!r} must look like 'IN->OUT'")
            key = (parts[0], parts[1])
        out[(str(key[0]), str(key[1]))] = float(v)
    return out


@dataclass(frozen=True)
class EnergyType:
    id: str
    label: str = ""


@dataclass
class VertexSpec:
    id: str
    kind: str
    inflow: dict = field(default_factory=dict)
    outflow: dict = field(default_factory=dict)
    conversion: dict = field(default_factory=dict)
    inflow_price: dict = field(default_factory=dict)
    outflow_price: dict = field(default_factory=dict)
    # production units
    ramp_up: dict = field(default_factory=dict)
    ramp_down: dict = field(default_factory=dict)
    start_cost: float = 0.0
    min_up: int = 0
    min_down: int = 0
    initial_status: int = 0
    initial_hold: int = 0
    initial_output: dict = field(default_factory=dict)
    excludes: list = field(default_factory=list)
    depends: list = field(default_factory=list)
    first_stage: bool = False
    renewable: bool = False
    # storages and interconnections
    energy: str | None = None
    capacity: Param = INF
    loss: float = 0.0
    max_flow: Param = INF
    initial_level: float = 0.0
    target_level: float = 0.0
    artificial: bool = False

    def __post_init__(self):
        self.inflow = _bounds(self.inflow)
        self.outflow = _bounds(self.outflow)
        self.conversion = _conversion(self.conversion)
        self.inflow_price = {str(f): as_param(p) for f, p in (self.inflow_price or {}).items()}
        self.outflow_price = {str(f): as_param(p) for f, p in (self.outflow_price or {}).items()}
        self.ramp_up = {str(f): float(v) for f, v in (self.ramp_up or {}).items()}
        self.ramp_down = {str(f): float(v) for f, v in (self.ramp_down or {}).items()}
        self.initial_output = {str(f): float(v) for f, v in (self.initial_output or {}).items()}
        self.capacity = as_param(self.capacity)
        self.max_flow = as_param(self.max_flow)
        self.excludes = list(self.excludes or [])
        self.depends = list(self.depends or [])

    @property
    def is_unit(self) -> bool:
        return self.kind in _UNITS

    @property
    def has_commitment(self) -> bool:
        return self.kind == UNIT_WC

    def input_energies(self) -> set[str]:
        if self.kind in (STORAGE, INTERCONNECTION):
            return {self.energy} if self.energy else set()
        return set(self.inflow)

    def output_energies(self) -> set[str]:
        if self.kind in (STORAGE, INTERCONNECTION):
            return {self.energy} if self.energy else set()
        return set(self.outflow)


@dataclass
class ConnectionSpec:
    source: str
    target: str
    energy: str
    capacity: float = INF

    def __post_init__(self):
        cap = as_param(self.capacity)
        if isinstance(cap, SeriesRef):
            raise ValueError("connection capacities must be constant")
        self.capacity = cap


@dataclass
class MarketSpec:
    """A day-ahead market with its two imbalance vertices.

    For a selling market the day-ahead vertex is a demand site paying the
    price, the buy-imbalance vertex a penalty-priced source covering
    shortfalls of a sold quantity and the sell-imbalance vertex a
    penalty-priced sink for surplus. A buying market mirrors this: the
    day-ahead vertex is a source charging the price.
    """

    id: str
    side: str
    energy: str
    price: Param
    penalty: float = 600.0
    da: str | None = None
    bmb: str | None = None
    bms: str | None = None
    imbalance: bool = True

    def __post_init__(self):
        self.price = as_param(self.price)
        self.da = self.da or self.id
        self.bmb = self.bmb or f"{self.id}_bmb"
        self.bms = self.bms or f"{self.id}_bms"

    @property
    def members(self) -> tuple[str, str, str]:
        return (self.da, self.bmb, self.bms)


@dataclass
class Defaults:
    heat_energy: str = "H"
    missing_heat: bool = True
    excess_heat: bool = True
    missing_heat_penalty: float = 10000.0
    excess_heat_penalty: float = 0.0
    period_hours: float = 1.0


@dataclass
class SystemSpec:
    name: str
    energy_types: list[EnergyType]
    vertices: list[VertexSpec]
    connections: list[ConnectionSpec]
    markets: list[MarketSpec] = field(default_factory=list)
    defaults: Defaults = field(default_factory=Defaults)
    # quantity groups for scenario construction: {"price": [...], "heat": [...]}
    uncertain: dict = field(default_factory=dict)
    # quantity name -> CSV path, resolved by the config loader
    series: dict = field(default_factory=dict)

    def vertex(self, vid: str) -> VertexSpec:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def vertex_map(self) -> dict[str, VertexSpec]:
        return {v.id: v for v in self.vertices}

    def energy_ids(self) -> list[str]:
        return [e.id for e in self.energy_types]

    def units_with_commitment(self) -> list[VertexSpec]:
        return [v for v in self.vertices if v.has_commitment]

    def copy(self) -> "SystemSpec":
        return dataclasses.replace(
            self,
            vertices=[dataclasses.replace(v) for v in self.vertices],
            connections=[dataclasses.replace(c) for c in self.connections],
            markets=[dataclasses.replace(m) for m in self.markets],
            defaults=dataclasses.replace(self.defaults),
            uncertain={k: list(v) for k, v in self.uncertain.items()},
            series=dict(self.series),
        )

    def referenced_series(self) -> set[str]:
        names = set()

        def visit(p):
            if isinstance(p, SeriesRef):
                names.add(p.name)

        for v in self.vertices:
            for lo, hi in list(v.inflow.values()) + list(v.outflow.values()):
                visit(lo)
                visit(hi)
            for p in list(v.inflow_price.values()) + list(v.outflow_price.values()):
                visit(p)
            visit(v.capacity)
            visit(v.max_flow)
        for m in self.markets:
            visit(m.price)
        return names


# ---------------------------------------------------------------------------
# market and penalty vertices


def expand_system(spec: SystemSpec) -> SystemSpec:
    """Add market member vertices and the missing-heat sources.

    Idempotent: vertices that already exist are left alone.
    """
    spec = spec.copy()
    have = spec.vertex_map()
    conns = {(c.source, c.target, c.energy) for c in spec.connections}

    def add_vertex(v: VertexSpec):
        if v.id not in have:
            spec.vertices.append(v)
            have[v.id] = v

    def connect(a, b, f):
        if (a, b, f) not in conns:
            spec.connections.append(ConnectionSpec(a, b, f))
            conns.add((a, b, f))

    for m in spec.markets:
        f = m.energy
        price = m.price
        neg = SeriesRef(price.name, -price.scale) if isinstance(price, SeriesRef) else -price
        if m.side == "selling":
            add_vertex(VertexSpec(m.da, DEMAND, inflow={f: (0.0, INF)}, inflow_price={f: neg}))
            if m.imbalance:
                add_vertex(VertexSpec(m.bmb, SOURCE, outflow={f: (0.0, INF)}, outflow_price={f: m.penalty}))
                add_vertex(VertexSpec(m.bms, DEMAND, inflow={f: (0.0, INF)}, inflow_price={f: m.penalty}))
                connect(m.bmb, m.da, f)
                for c in list(spec.connections):
                    if c.target == m.da and c.energy == f and c.source != m.bmb:
                        connect(c.source, m.bms, f)
        elif m.side == "buying":
            add_vertex(VertexSpec(m.da, SOURCE, outflow={f: (0.0, INF)}, outflow_price={f: price}))
            if m.imbalance:
                add_vertex(VertexSpec(m.bmb, SOURCE, outflow={f: (0.0, INF)}, outflow_price={f: m.penalty}))
                add_vertex(VertexSpec(m.bms, DEMAND, inflow={f: (0.0, INF)}, inflow_price={f: m.penalty}))
                connect(m.da, m.bms, f)
                for c in list(spec.connections):
                    if c.source == m.da and c.energy == f and c.target != m.bms:
                        connect(m.bmb, c.target, f)

    d = spec.defaults
    if d.missing_heat:
        for v in list(spec.vertices):
            if v.kind == DEMAND and not v.artificial and d.heat_energy in v.inflow and not _is_market(spec, v.id):
                sid = f"missing_{v.id}"
                add_vertex(VertexSpec(sid, SOURCE, outflow={d.heat_energy: (0.0, INF)},
                                      outflow_price={d.heat_energy: d.missing_heat_penalty}, artificial=True))
                connect(sid, v.id, d.heat_energy)
    return spec


def _is_market(spec: SystemSpec, vid: str) -> bool:
    return any(vid in m.members for m in spec.markets)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


def _is_zero(p: Param) -> bool:
    return not isinstance(p, SeriesRef) and p == 0.0


def _check_pair(lo: Param, hi: Param) -> bool:
    if isinstance(lo, SeriesRef) or isinstance(hi, SeriesRef):
        return True
    return lo <= hi


def validate_system(spec: SystemSpec) -> ValidationReport:
    rep = ValidationReport()
    err, warn = rep.errors.append, rep.warnings.append

    energies = spec.energy_ids()
    if len(set(energies)) != len(energies):
        err("energy type ids must be unique")
    eset = set(energies)

    ids = [v.id for v in spec.vertices]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    for i in dup:
        err(f"duplicate vertex id {i!r}")

    for m in spec.markets:
        if m.side not in ("selling", "buying"):
            err(f"market {m.id}: side must be 'selling' or 'buying'")
        if m.energy not in eset:
            err(f"market {m.id}: unknown energy type {m.energy!r}")
        if m.penalty < 0:
            err(f"market {m.id}: imbalance penalty must be non-negative")
        if len(set(m.members)) != 3:
            err(f"market {m.id}: needs three distinct member vertices")

    try:
        full = expand_system(spec)
    except Exception as exc:  # malformed market data
        err(f"cannot expand markets: {exc}")
        return rep
    vmap = full.vertex_map()
    wc_units = {v.id for v in full.vertices if v.has_commitment}

    for m in full.markets:
        kinds = tuple(vmap[x].kind if x in vmap else None for x in m.members)
        if not m.imbalance:
            kinds = (kinds[0], SOURCE, DEMAND)
        want = (DEMAND, SOURCE, DEMAND) if m.side == "selling" else (SOURCE, SOURCE, DEMAND)
        if kinds != want:
            err(f"market {m.id}: member vertices must be {want} for a {m.side} market, got {kinds}")

    for v in full.vertices:
        tag = f"vertex {v.id}"
        if v.kind not in KINDS:
            err(f"{tag}: unknown kind {v.kind!r}")
            continue
        for fam, bounds in (("inflow", v.inflow), ("outflow", v.outflow)):
            for f, (lo, hi) in bounds.items():
                if f not in eset:
                    err(f"{tag}: {fam} bound on unknown energy {f!r}")
                if not _check_pair(lo, hi):
                    err(f"{tag}: {fam} bound for {f} has lower > upper")
                if not isinstance(lo, SeriesRef) and lo < 0:
                    err(f"{tag}: {fam} lower bound for {f} is negative")
        if v.kind == SOURCE:
            if any(not (_is_zero(lo) and _is_zero(hi)) for lo, hi in v.inflow.values()):
                err(f"{tag}: energy sources have no inflow")
            if not v.outflow:
                err(f"{tag}: source without an outflow energy")
        if v.kind == DEMAND:
            if any(not (_is_zero(lo) and _is_zero(hi)) for lo, hi in v.outflow.values()):
                err(f"{tag}: demand sites have no outflow")
            if not v.inflow:
                err(f"{tag}: demand site without an inflow energy")
        if v.kind in (STORAGE, INTERCONNECTION):
            if v.energy not in eset:
                err(f"{tag}: needs a known energy type")
            if not 0.0 <= v.loss < 1.0:
                err(f"{tag}: loss must lie in [0, 1), got {v.loss}")
        if v.kind == STORAGE:
            cap = v.capacity
            if not isinstance(cap, SeriesRef):
                if cap < 0:
                    err(f"{tag}: capacity must be non-negative")
                elif v.initial_level > cap + 1e-9:
                    err(f"{tag}: initial level exceeds capacity")
            if v.initial_level < 0 or v.target_level < 0:
                err(f"{tag}: initial and target levels must be non-negative")
        if v.is_unit:
            for (f, g), phi in v.conversion.items():
                if f not in v.inflow or g not in v.outflow:
                    err(f"{tag}: conversion {f}->{g} needs an inflow bound for {f} and an outflow bound for {g}")
                if not phi > 0:
                    err(f"{tag}: conversion factor {f}->{g} must be positive")
            outs: dict[str, list[str]] = {}
            for f, g in v.conversion:
                outs.setdefault(g, []).append(f)
            for g, fs in outs.items():
                if len(fs) > 1:
                    warn(f"{tag}: output {g} is tied to several inputs ({', '.join(sorted(fs))}); "
                         "factors must be mutually consistent")
            if not v.conversion:
                warn(f"{tag}: unit without conversion factors; inputs and outputs are unrelated")
            if v.min_up < 0 or v.min_down < 0:
                err(f"{tag}: minimum up/down times must be non-negative")
            if v.initial_hold < 0:
                err(f"{tag}: initial hold period must be non-negative")
            if v.initial_status not in (0, 1):
                err(f"{tag}: initial status must be 0 or 1")
            for f in list(v.ramp_up) + list(v.ramp_down):
                if f not in v.outflow:
                    err(f"{tag}: ramp limit on {f} without an outflow bound")
            for ref in v.excludes + v.depends:
                if ref not in wc_units:
                    err(f"{tag}: exclusion/dependency references {ref!r}, not a unit with commitment")
            if (v.excludes or v.depends) and not v.has_commitment:
                err(f"{tag}: exclusion/dependency sets need a unit with commitment")
            if v.has_commitment:
                for fam, bounds in (("inflow", v.inflow), ("outflow", v.outflow)):
                    for f, (lo, hi) in bounds.items():
                        if not isinstance(hi, SeriesRef) and math.isinf(hi):
                            err(f"{tag}: {fam} of {f} needs a finite upper bound for status gating")

    for c in full.connections:
        tag = f"connection {c.source}->{c.target} ({c.energy})"
        if c.source not in vmap or c.target not in vmap:
            err(f"{tag}: references an unknown vertex")
            continue
        if c.energy not in eset:
            err(f"{tag}: unknown energy type")
            continue
        a, b = vmap[c.source], vmap[c.target]
        if (a.kind, b.kind) not in CATALOGUE:
            err(f"{tag}: {a.kind} to {b.kind} connections are not permitted")
        if c.energy not in a.output_energies():
            err(f"{tag}: {a.id} has no outflow of {c.energy}")
        if c.energy not in b.input_energies():
            err(f"{tag}: {b.id} has no inflow of {c.energy}")
        if c.capacity < 0:
            err(f"{tag}: capacity must be non-negative")

    seen = {}
    for c in full.connections:
        key = (c.source, c.target, c.energy)
        if key in seen:
            err(f"connection {c.source}->{c.target} ({c.energy}) is listed twice")
        seen[key] = True
    return rep


# ---------------------------------------------------------------------------
# network


@dataclass(frozen=True)
class Arc:
    index: int
    source: str
    target: str
    energy: str
    t_start: int
    t_end: int
    scenario: int
    cost: float
    lower: float
    upper: float
    role: str


class FlowNetwork:
    """Arcs over (vertex, energy, period, scenario) with cost and bounds.

    Arc data live in parallel arrays. ``out_arcs`` and ``in_arcs`` map
    ``(vertex, energy, t, w)`` to arc indices; ``siblings`` maps an arc key
    without scenario to the arc indices across scenarios.
    """

    def __init__(self, spec: SystemSpec, horizon: int, first_stage: int, probs: np.ndarray):
        self.spec = spec
        self.vertices = spec.vertex_map()
        self.horizon = horizon
        self.first_stage = first_stage
        self.probs = np.asarray(probs, dtype=float)
        self.n_scenarios = len(self.probs)
        self.source: list[str] = []
        self.target: list[str] = []
        self.energy: list[str] = []
        self._t0: list[int] = []
        self._t1: list[int] = []
        self._w: list[int] = []
        self._cost: list[float] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self.role: list[str] = []
        self.out_arcs: dict[tuple, list[int]] = {}
        self.in_arcs: dict[tuple, list[int]] = {}
        self.siblings: dict[tuple, list[int]] = {}
        # (vertex, "in"/"out", energy) -> (lo, hi) arrays of shape (T, W)
        self.vertex_bounds: dict[tuple[str, str, str], tuple[np.ndarray, np.ndarray]] = {}
        self.prices: dict[tuple[str, str, str], np.ndarray] = {}
        self.market_prices: dict[str, np.ndarray] = {}
        # per-scenario constant cost (unweighted); obj_constant = probs @ scenario_constant
        self.scenario_constant = np.zeros(len(self.probs))
        self.storage_target = "hard"

    @property
    def obj_constant(self) -> float:
        return float(self.probs @ self.scenario_constant)

    # construction helpers
    def _add(self, a, b, f, t0, t1, w, cost, lo, hi, role) -> int:
        if not lo <= hi + 1e-12:
            raise ValueError(f"arc {a}->{b} {f} t={t0} w={w}: lower bound {lo} exceeds upper {hi}")
        if not math.isfinite(cost):
            raise ValueError(f"arc {a}->{b} {f} t={t0} w={w}: cost is not finite")
        i = len(self.source)
        self.source.append(a)
        self.target.append(b)
        self.energy.append(f)
        self._t0.append(t0)
        self._t1.append(t1)
        self._w.append(w)
        self._cost.append(cost)
        self._lo.append(lo)
        self._hi.append(hi)
        self.role.append(role)
        self.out_arcs.setdefault((a, f, t0, w), []).append(i)
        self.in_arcs.setdefault((b, f, t1, w), []).append(i)
        self.siblings.setdefault((a, b, f, t0, t1), []).append(i)
        return i

    def _freeze(self) -> None:
        self.t_start = np.array(self._t0, dtype=int)
        self.t_end = np.array(self._t1, dtype=int)
        self.scenario = np.array(self._w, dtype=int)
        self.cost = np.array(self._cost, dtype=float)
        self.lower = np.array(self._lo, dtype=float)
        self.upper = np.array(self._hi, dtype=float)
        for arr in (self.t_start, self.t_end, self.scenario, self.cost, self.lower, self.upper):
            arr.setflags(write=False)
        del self._t0, self._t1, self._w, self._cost, self._lo, self._hi

    # queries
    @property
    def num_arcs(self) -> int:
        return len(self.source)

    def arc(self, i: int) -> Arc:
        return Arc(i, self.source[i], self.target[i], self.energy[i], int(self.t_start[i]),
                   int(self.t_end[i]), int(self.scenario[i]), float(self.cost[i]),
                   float(self.lower[i]), float(self.upper[i]), self.role[i])

    def arcs(self) -> Iterable[Arc]:
        return (self.arc(i) for i in range(self.num_arcs))

    def arc_name(self, i: int) -> str:
        return (f"x__{self.source[i]}__{self.target[i]}__{self.energy[i]}__"
                f"{self.t_start[i]}__{self.t_end[i]}__{self.scenario[i]}")

    def outgoing(self, v: str, f: str, t: int, w: int) -> list[int]:
        return self.out_arcs.get((v, f, t, w), [])

    def incoming(self, v: str, f: str, t: int, w: int) -> list[int]:
        return self.in_arcs.get((v, f, t, w), [])

    def sibling_set(self, i: int) -> list[int]:
        key = (self.source[i], self.target[i], self.energy[i], int(self.t_start[i]), int(self.t_end[i]))
        return self.siblings[key]

    def units(self) -> list[VertexSpec]:
        return [v for v in self.spec.vertices if v.is_unit]

    def storages(self) -> list[VertexSpec]:
        return [v for v in self.spec.vertices if v.kind == STORAGE]

    def first_stage_arcs(self) -> list[int]:
        """Arcs leaving a first-stage unit within the first-stage periods."""
        fs = {v.id for v in self.spec.vertices if v.is_unit and v.first_stage}
        return [i for i in range(self.num_arcs)
                if self.source[i] in fs and self.t_start[i] < self.first_stage and self.role[i] == FLOW]

    def market(self, mid: str) -> MarketSpec:
        for m in self.spec.markets:
            if m.id == mid:
                return m
        raise KeyError(mid)

    def __repr__(self) -> str:
        return (f"FlowNetwork({self.spec.name!r}, T={self.horizon}, T*={self.first_stage}, "
                f"scenarios={self.n_scenarios}, arcs={self.num_arcs})")


def _resolve(p: Param, scenarios: "ScenarioSet | None", T: int, W: int) -> np.ndarray:
    if isinstance(p, SeriesRef):
        if scenarios is None:
            raise ValueError(f"series {p.name!r} referenced but no scenario set given")
        arr = scenarios.matrix(p.name)
        if arr.shape[1] < T:
            raise ValueError(f"series {p.name!r} covers {arr.shape[1]} periods, horizon needs {T}")
        return p.scale * arr[:, :T].T.astype(float)
    return np.full((T, W), float(p))


def build_network(
    spec: SystemSpec,
    horizon: int,
    first_stage: int,
    scenarios: "ScenarioSet | None" = None,
    storage_target: str = "hard",
    initial_levels: dict[str, float] | None = None,
    clamp_heat_demand: bool = True,
) -> FlowNetwork:
    """Expand ``spec`` over ``horizon`` periods and the scenarios.

    ``storage_target`` controls the end-of-horizon storage arc: ``hard``
    forces the target level, ``free`` drops it and ``soft`` lets a
    penalty-priced shortfall source make up the difference.
    ``initial_levels`` overrides the storages' configured initial levels.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one period")
    if not 0 <= first_stage <= horizon:
        raise ValueError("first-stage length must lie in [0, horizon]")
    if storage_target not in ("hard", "free", "soft"):
        raise ValueError(f"unknown storage target mode {storage_target!r}")
    report = validate_system(spec)
    if not report.ok:
        raise ValueError("system specification is invalid:\n" + str(report))
    full = expand_system(spec)
    probs = scenarios.probabilities if scenarios is not None else np.ones(1)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("scenario probabilities must sum to one")
    T, W = horizon, len(probs)
    net = FlowNetwork(full, T, first_stage, probs)
    net.storage_target = storage_target
    vmap = net.vertices
    d = full.defaults

    def res(p):
        return _resolve(p, scenarios, T, W)

    for v in full.vertices:
        if v.kind in (STORAGE, INTERCONNECTION):
            mf = res(v.max_flow)
            zero = np.zeros((T, W))
            if v.kind == STORAGE:
                net.vertex_bounds[(v.id, "in", v.energy)] = (zero, mf)
                net.vertex_bounds[(v.id, "out", v.energy)] = (zero, mf)
            else:
                lo, hi = v.inflow.get(v.energy, (0.0, INF))
                net.vertex_bounds[(v.id, "in", v.energy)] = (res(lo), res(hi))
                lo, hi = v.outflow.get(v.energy, (0.0, INF))
                net.vertex_bounds[(v.id, "out", v.energy)] = (res(lo), res(hi))
        else:
            for f, (lo, hi) in v.inflow.items():
                net.vertex_bounds[(v.id, "in", f)] = (res(lo), res(hi))
            for f, (lo, hi) in v.outflow.items():
                net.vertex_bounds[(v.id, "out", f)] = (res(lo), res(hi))
        for f, p in v.inflow_price.items():
            net.prices[(v.id, "in", f)] = res(p)
        for f, p in v.outflow_price.items():
            net.prices[(v.id, "out", f)] = res(p)
    for m in full.markets:
        net.market_prices[m.id] = res(m.price)

    # heat demand: negative values clamp to zero; with excess heat allowed the
    # site accepts a surplus, charged at the excess penalty
    for v in full.vertices:
        if v.kind != DEMAND or v.artificial or _is_market(full, v.id):
            continue
        key = (v.id, "in", d.heat_energy)
        if key not in net.vertex_bounds:
            continue
        lo, hi = net.vertex_bounds[key]
        if clamp_heat_demand:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        if d.excess_heat:
            hi = np.full_like(hi, INF)
            if d.excess_heat_penalty:
                pk = (v.id, "in", d.heat_energy)
                net.prices[pk] = net.prices.get(pk, np.zeros((T, W))) + d.excess_heat_penalty
                net.scenario_constant -= d.excess_heat_penalty * lo.sum(axis=0)
        net.vertex_bounds[key] = (lo, hi)

    zeros = np.zeros((T, W))

    def price(v, side, f):
        return net.prices.get((v, side, f), zeros)

    def upper(v: VertexSpec, side: str, f: str) -> np.ndarray:
        b = net.vertex_bounds.get((v.id, side, f))
        return b[1] if b is not None else np.full((T, W), INF)

    for c in full.connections:
        a, b, f = vmap[c.source], vmap[c.target], c.energy
        cost = probs[None, :] * (price(a.id, "out", f) + price(b.id, "in", f))
        hi = np.minimum(np.minimum(upper(a, "out", f), upper(b, "in", f)), c.capacity)
        for w in range(W):
            for t in range(T):
                net._add(a.id, b.id, f, t, t, w, float(cost[t, w]), 0.0, float(hi[t, w]), FLOW)

    levels = dict(initial_levels or {})
    for s in [v for v in full.vertices if v.kind == STORAGE]:
        cap = res(s.capacity)
        f = s.energy
        init = float(levels.get(s.id, s.initial_level))
        e_star, d_star = f"init*_{s.id}", f"target*_{s.id}"
        for w in range(W):
            net._add(e_star, s.id, f, 0, 0, w, 0.0, init, init, INITIAL)
            for t in range(T - 1):
                net._add(s.id, s.id, f, t, t + 1, w, 0.0, 0.0, float(cap[t, w]), CARRY)
            last_cap = float(cap[T - 1, w])
            if storage_target == "hard":
                tgt = s.target_level
                net._add(s.id, d_star, f, T - 1, T - 1, w, 0.0, tgt, max(last_cap, tgt), TARGET)
            elif storage_target == "free":
                net._add(s.id, d_star, f, T - 1, T - 1, w, 0.0, 0.0, last_cap, TARGET)
            else:
                tgt = s.target_level
                net._add(s.id, d_star, f, T - 1, T - 1, w, 0.0, 0.0, max(last_cap, tgt), TARGET)
                net._add(f"short*_{s.id}", d_star, f, T - 1, T - 1, w,
                         float(probs[w] * d.missing_heat_penalty), 0.0, tgt, SHORTFALL)
    net._freeze()
    return net


def storage_vertex_ids(net: FlowNetwork) -> list[str]:
    return [v.id for v in net.storages()]

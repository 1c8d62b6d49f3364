import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dhnet.network import (
    CARRY,
    CATALOGUE,
    FLOW,
    INITIAL,
    SHORTFALL,
    TARGET,
    ConnectionSpec,
    MarketSpec,
    SeriesRef,
    VertexSpec,
    as_param,
    build_network,
    expand_system,
    validate_system,
)
from oracles import boiler_spec, chp_market_spec, scenario_set, storage_spec


# -- validation ----------------------------------------------------------

def test_well_formed_boiler_validates():
    rep = validate_system(boiler_spec())
    assert rep.ok
    assert rep.errors == []


def test_demand_with_outflow_is_rejected():
    spec = boiler_spec()
    spec.vertices[2] = VertexSpec("d_H", "demand", inflow={"H": (5, 5)}, outflow={"H": 1.0})
    rep = validate_system(spec)
    assert any("demand sites have no outflow" in e for e in rep.errors)


def test_source_with_inflow_is_rejected():
    spec = boiler_spec()
    spec.vertices[0] = VertexSpec("e_NG", "source", inflow={"NG": 3.0}, outflow={"NG": math.inf})
    assert any("no inflow" in e for e in validate_system(spec).errors)


def test_storage_loss_out_of_range():
    spec = storage_spec(loss=1.2)
    assert any("loss" in e for e in validate_system(spec).errors)


@pytest.mark.parametrize("edit, fragment", [
    (lambda s: s.connections.append(ConnectionSpec("u_GB", "nowhere", "H")), "unknown vertex"),
    (lambda s: s.connections.append(ConnectionSpec("d_H", "u_GB", "H")), "not permitted"),
    (lambda s: s.connections.append(ConnectionSpec("e_NG", "u_GB", "NG")), "listed twice"),
    (lambda s: setattr(s.vertices[1], "excludes", ["u_XX"]), "exclusion/dependency"),
    (lambda s: s.vertices[1].inflow.update({"NG": (30.0, 10.0)}), "lower > upper"),
    (lambda s: s.vertices[1].conversion.update({("EL", "H"): 1.0}), "conversion EL->H"),
])
def test_validation_errors(edit, fragment):
    spec = boiler_spec()
    edit(spec)
    rep = validate_system(spec)
    assert not rep.ok
    assert any(fragment in e for e in rep.errors), rep.errors


def test_market_member_kinds_are_checked():
    spec = chp_market_spec()
    spec.vertices.append(VertexSpec("spot_bmb", "demand", inflow={"EL": math.inf}))
    rep = validate_system(spec)
    assert any("market spot" in e for e in rep.errors)


def test_market_member_ids_must_differ():
    spec = chp_market_spec()
    spec.markets[0] = MarketSpec("spot", "selling", "EL", SeriesRef("price"), bmb="spot", bms="x")
    assert any("three distinct" in e for e in validate_system(spec).errors)


def test_multi_input_output_warns():
    spec = boiler_spec()
    gb = spec.vertices[1]
    gb.inflow["EL"] = (0.0, 1.0)
    gb.conversion[("EL", "H")] = 2.0
    rep = validate_system(spec)
    assert rep.ok
    assert any("tied to several inputs" in w for w in rep.warnings)


def test_commitment_units_need_finite_bounds():
    spec = boiler_spec()
    spec.vertices[1] = VertexSpec("u_GB", "unit-with-commitment", inflow={"NG": 20.0}, outflow={"H": math.inf},
                                  conversion={"NG->H": 0.9})
    assert any("finite upper bound" in e for e in validate_system(spec).errors)


def test_invalid_spec_refuses_to_build():
    with pytest.raises(ValueError, match="invalid"):
        build_network(storage_spec(loss=1.5), 2, 2, scenario_set(2, [1.0]))


# -- parameters ----------------------------------------------------------

@pytest.mark.parametrize("text, name, scale", [
    ("price", "price", 1.0), ("-price", "price", -1.0), ("0.5*heat_d1", "heat_d1", 0.5),
    ("1e3 * x.y", "x.y", 1000.0),
])
def test_series_reference_parsing(text, name, scale):
    ref = as_param(text)
    assert ref == SeriesRef(name, scale)
    assert SeriesRef.parse(str(ref)) == ref


@pytest.mark.parametrize("value, expected", [("inf", math.inf), ("-inf", -math.inf), (None, math.inf),
                                             ("2.5", 2.5), (3, 3.0)])
def test_constant_parameters(value, expected):
    assert as_param(value) == expected


def test_bad_series_reference():
    with pytest.raises(ValueError):
        SeriesRef.parse("2*")


# -- construction --------------------------------------------------------

def test_mini_spec_arc_count_by_hand():
    # source->unit and unit->demand in each of two periods
    net = build_network(boiler_spec(), horizon=2, first_stage=2)
    assert net.num_arcs == 4
    assert sorted((a.source, a.target, a.t_start) for a in net.arcs()) == [
        ("e_NG", "u_GB", 0), ("e_NG", "u_GB", 1), ("u_GB", "d_H", 0), ("u_GB", "d_H", 1)]


def test_storage_carry_arcs_use_capacity():
    T, probs = 6, [0.5, 0.3, 0.2]
    net = build_network(storage_spec(capacity=361.54), T, T, scenario_set(T, probs))
    carry = [a for a in net.arcs() if a.role == CARRY]
    assert len(carry) == (T - 1) * len(probs)
    for a in carry:
        assert (a.source, a.target, a.energy) == ("s_1", "s_1", "H")
        assert a.t_end == a.t_start + 1
        assert a.lower == 0.0 and a.upper == 361.54


def test_initial_and_target_storage_arcs():
    T = 4
    net = build_network(storage_spec(initial=0.1, target=0.1), T, T, scenario_set(T, [0.6, 0.4]))
    init = [a for a in net.arcs() if a.role == INITIAL]
    tgt = [a for a in net.arcs() if a.role == TARGET]
    assert len(init) == len(tgt) == 2
    for a in init:
        assert (a.target, a.t_start, a.lower, a.upper) == ("s_1", 0, 0.1, 0.1)
    for a in tgt:
        assert (a.source, a.t_start, a.lower, a.upper) == ("s_1", T - 1, 0.1, 361.54)


def test_target_above_capacity_widens_the_target_arc():
    net = build_network(storage_spec(capacity=5.0, initial=1.0, target=8.0), 3, 3, scenario_set(3, [1.0]))
    (a,) = [a for a in net.arcs() if a.role == TARGET]
    assert (a.lower, a.upper) == (8.0, 8.0)


@pytest.mark.parametrize("mode, roles", [("free", {TARGET}), ("soft", {TARGET, SHORTFALL})])
def test_storage_target_modes(mode, roles):
    net = build_network(storage_spec(target=7.0), 3, 3, scenario_set(3, [1.0]), storage_target=mode)
    end = [a for a in net.arcs() if a.role in (TARGET, SHORTFALL)]
    assert {a.role for a in end} == roles
    assert all(a.lower == 0.0 for a in end)


def test_initial_level_override():
    net = build_network(storage_spec(initial=0.1), 3, 3, scenario_set(3, [1.0]), initial_levels={"s_1": 4.0})
    (a,) = [a for a in net.arcs() if a.role == INITIAL]
    assert a.lower == a.upper == 4.0


def test_short_series_fails():
    with pytest.raises(ValueError, match="covers 3 periods"):
        build_network(storage_spec(), 5, 5, scenario_set(3, [1.0]))


def test_series_without_scenarios_fails():
    with pytest.raises(ValueError, match="no scenario set"):
        build_network(storage_spec(), 2, 2)


def test_connection_capacity_caps_arcs():
    spec = boiler_spec()
    spec.connections[1] = ConnectionSpec("u_GB", "d_H", "H", 3.5)
    net = build_network(spec, 2, 2)
    assert [a.upper for a in net.arcs() if a.target == "d_H"] == [3.5, 3.5]


def test_expansion_adds_market_and_missing_heat_vertices():
    full = expand_system(chp_market_spec())
    ids = {v.id for v in full.vertices}
    assert {"spot", "spot_bmb", "spot_bms", "missing_d_H"} <= ids
    conns = {(c.source, c.target) for c in full.connections}
    assert {("spot_bmb", "spot"), ("u_CHP", "spot_bms"), ("missing_d_H", "d_H")} <= conns
    assert expand_system(full).vertex_map().keys() == full.vertex_map().keys()


def test_buying_market_expansion():
    full = expand_system(chp_market_spec("buying"))
    conns = {(c.source, c.target) for c in full.connections}
    assert {("spot", "u_EB"), ("spot_bmb", "u_EB"), ("spot", "spot_bms")} <= conns


def test_missing_heat_source_costs_the_penalty():
    net = build_network(boiler_spec(missing_heat=True), 1, 1)
    (a,) = [a for a in net.arcs() if a.source == "missing_d_H"]
    assert a.cost == 10000.0


def test_excess_heat_lifts_the_demand_upper_bound():
    net = build_network(boiler_spec(demand=5.0), 1, 1)
    lo, hi = net.vertex_bounds[("d_H", "in", "H")]
    assert lo[0, 0] == 5.0 and math.isinf(hi[0, 0])


# -- invariants over random horizons and scenario counts -------------------

def reference_arc_count(spec, T, W, target="hard"):
    """Connections of the expanded system per period and scenario, plus the
    storage initial, carry, target and shortfall arcs."""
    full = expand_system(spec)
    n = len(full.connections) * T * W
    per_storage = 1 + (T - 1) + 1 + (1 if target == "soft" else 0)
    n += sum(per_storage * W for v in full.vertices if v.kind == "storage")
    return n


horizons = st.integers(min_value=1, max_value=8)
weights = st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=1, max_size=4)


@given(T=horizons, w=weights, target=st.sampled_from(["hard", "free", "soft"]))
def test_arc_count_matches_reference(T, w, target):
    probs = np.array(w) / sum(w)
    for spec in (storage_spec(), chp_market_spec()):
        net = build_network(spec, T, T, scenario_set(T, probs), storage_target=target)
        assert net.num_arcs == reference_arc_count(spec, T, len(probs), target)


@given(T=horizons, w=weights)
def test_index_structures(T, w):
    probs = np.array(w) / sum(w)
    net = build_network(storage_spec(), T, T, scenario_set(T, probs))
    assert abs(net.probs.sum() - 1.0) <= 1e-9
    outs = sorted(i for idx in net.out_arcs.values() for i in idx)
    ins = sorted(i for idx in net.in_arcs.values() for i in idx)
    assert outs == ins == list(range(net.num_arcs))
    for w_ in range(len(probs)):
        init = [i for i in net.incoming("s_1", "H", 0, w_) if net.role[i] == INITIAL]
        tgt = [i for i in net.outgoing("s_1", "H", T - 1, w_) if net.role[i] == TARGET]
        assert len(init) == 1 and len(tgt) == 1


@given(T=horizons, w=weights)
def test_siblings_differ_only_in_scenario(T, w):
    probs = np.array(w) / sum(w)
    net = build_network(chp_market_spec(), T, T, scenario_set(T, probs))
    for i in range(net.num_arcs):
        sib = net.sibling_set(i)
        assert i in sib
        assert len(sib) == len(probs)
        keys = {(net.source[j], net.target[j], net.energy[j], net.t_start[j], net.t_end[j]) for j in sib}
        assert len(keys) == 1
        assert len({net.scenario[j] for j in sib}) == len(sib)


@given(T=horizons, w=weights)
def test_flow_arcs_respect_the_catalogue(T, w):
    probs = np.array(w) / sum(w)
    for spec in (storage_spec(), chp_market_spec(), chp_market_spec("buying")):
        net = build_network(spec, T, T, scenario_set(T, probs))
        for a in net.arcs():
            assert a.lower <= a.upper
            assert math.isfinite(a.cost)
            if a.role == FLOW:
                assert a.t_end == a.t_start
                pair = (net.vertices[a.source].kind, net.vertices[a.target].kind)
                assert pair in CATALOGUE
            elif a.role == CARRY:
                assert a.t_end == a.t_start + 1 and a.source == a.target


@given(T=horizons, w=weights, seed=st.integers(0, 1000))
def test_arc_cost_is_probability_times_prices(T, w, seed):
    probs = np.array(w) / sum(w)
    sset = scenario_set(T, probs, seed)
    spec = chp_market_spec()
    net = build_network(spec, T, T, sset)
    full = expand_system(spec)
    vm = full.vertex_map()

    def value(p, t, w_):
        if isinstance(p, SeriesRef):
            return p.scale * sset.scenarios[w_].data[p.name][t]
        return float(p)

    for a in net.arcs():
        if a.role != FLOW:
            continue
        expected = value(vm[a.source].outflow_price.get(a.energy, 0.0), a.t_start, a.scenario)
        expected += value(vm[a.target].inflow_price.get(a.energy, 0.0), a.t_start, a.scenario)
        assert a.cost / probs[a.scenario] == pytest.approx(expected, abs=1e-9)

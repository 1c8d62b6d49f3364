import math
import os

import numpy as np
import pandas as pd
import pytest
import yaml

from dhnet import synthetic
from dhnet.cli import DEFAULTS
from dhnet.config import ConfigError, dump_spec, load_config, load_series, load_spec, spec_from_dict
from dhnet.network import build_network, validate_system
from dhnet.scenario import ScenarioSet, TimeSeries, write_series_csv

ROOT = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
SHIPPED = ["middelfart", "bronderslev", "hillerod"]


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_are_valid(name):
    spec, run = load_config(os.path.join(ROOT, f"{name}.yaml"))
    report = validate_system(spec)
    assert report.ok, str(report)
    assert set(run) <= set(DEFAULTS)
    series = load_series(spec)
    assert spec.referenced_series() <= set(series)
    # eight weeks: three history weeks, two evaluation weeks and bootstrap pools
    assert min(len(s) for s in series.values()) >= 8 * 168
    assert {s.start for s in series.values()} == {pd.Timestamp("2021-01-04")}
    for kind in ("price", "heat"):
        assert set(spec.uncertain.get(kind, [])) <= set(series)
    first = ScenarioSet.single({k: v.values[:2] for k, v in series.items()})
    net = build_network(spec, 2, 2, first)
    assert net.num_arcs > 0


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_round_trip(name):
    spec = load_spec(os.path.join(ROOT, f"{name}.yaml"))
    again = spec_from_dict(yaml.safe_load(yaml.safe_dump(dump_spec(spec))))
    assert again.vertices == spec.vertices
    assert again.connections == spec.connections
    assert again.markets == spec.markets


def test_synthetic_system_round_trips():
    spec = synthetic.mini_system()
    assert spec_from_dict(yaml.safe_load(yaml.safe_dump(dump_spec(spec)))) == spec


def test_short_spellings():
    doc = yaml.safe_load("""
energy_types: {H: heat, NG: gas}
vertices:
  - {id: e, kind: source, outflow: {NG: inf}, outflow_price: {NG: 20}}
  - {id: u, kind: unit, inflow: {NG: 10}, outflow: {H: inf}, conversion: {NG->H: 0.9}}
  - {id: d, kind: demand, inflow: {H: [3, 3]}}
connections:
  - [e, u, NG]
  - {from: u, to: d, energy: H, capacity: 8}
""")
    spec = spec_from_dict(doc)
    assert [e.label for e in spec.energy_types] == ["heat", "gas"]
    assert spec.connections[1].capacity == 8
    assert validate_system(spec).ok


BASE = {
    "energy_types": ["H"],
    "vertices": [{"id": "d", "kind": "demand", "inflow": {"H": 1.0}}],
}


@pytest.mark.parametrize("patch, message", [
    ({"extra": 1}, "unknown sections"),
    ({"vertices": [{"id": "d", "kind": "demand", "colour": "red"}]}, "unknown fields"),
    ({"vertices": [{"kind": "demand"}]}, "id and a kind"),
    ({"connections": [["a", "b"]]}, "must be"),
    ({"connections": [{"from": "a", "energy": "H"}]}, "lacks"),
    ({"markets": [{"id": "m", "venue": "x"}]}, "unknown fields"),
    ({"defaults": {"colour": 1}}, "unknown defaults"),
])
def test_config_errors(patch, message):
    with pytest.raises(ConfigError, match=message):
        spec_from_dict({**BASE, **patch})


def test_root_must_be_a_mapping():
    with pytest.raises(ConfigError):
        spec_from_dict([1, 2])


def test_bad_yaml_and_bad_run(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("vertices: [\n")
    with pytest.raises(ConfigError):
        load_spec(bad)
    run = tmp_path / "run.yaml"
    run.write_text(yaml.safe_dump({**BASE, "run": [1]}))
    with pytest.raises(ConfigError, match="run section"):
        load_config(run)


def write(path, start, values):
    write_series_csv(path, TimeSeries(pd.Timestamp(start), np.asarray(values, float)))


def test_series_paths_are_relative_to_the_config(tmp_path):
    (tmp_path / "data").mkdir()
    write(tmp_path / "data" / "heat.csv", "2021-01-04", [1, 2, 3])
    doc = {"energy_types": ["H", "NG"],
           "vertices": [{"id": "e", "kind": "source", "outflow": {"NG": math.inf}},
                        {"id": "u", "kind": "unit", "inflow": {"NG": 10}, "outflow": {"H": math.inf},
                         "conversion": {"NG->H": 1.0}},
                        {"id": "d", "kind": "demand", "inflow": {"H": ["heat", "heat"]}}],
           "connections": [["e", "u", "NG"], ["u", "d", "H"]],
           "series": {"heat": "data/heat.csv"}}
    (tmp_path / "sys.yaml").write_text(yaml.safe_dump(doc))
    spec = load_spec(tmp_path / "sys.yaml")
    series = load_series(spec)
    np.testing.assert_array_equal(series["heat"].values, [1, 2, 3])
    # --data redirects by base name
    other = tmp_path / "other"
    other.mkdir()
    write(other / "heat.csv", "2021-01-04", [7, 7])
    assert len(load_series(spec, other)["heat"]) == 2


def test_series_must_align_and_be_listed(tmp_path):
    write(tmp_path / "a.csv", "2021-01-04", [1, 2])
    write(tmp_path / "b.csv", "2021-01-05", [1, 2])
    doc = {**BASE, "vertices": [{"id": "d", "kind": "demand", "inflow": {"H": ["a", "b"]}}],
           "series": {"a": "a.csv", "b": "b.csv"}}
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError, match="start"):
        load_series(load_spec(tmp_path / "s.yaml"))
    doc["series"] = {"a": "a.csv"}
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError, match="not listed"):
        load_series(load_spec(tmp_path / "s.yaml"))

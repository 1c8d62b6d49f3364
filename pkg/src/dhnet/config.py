"""YAML system descriptions and their CSV time series.

A config file has the sections ``name``, ``energy_types``, ``vertices``,
``connections``, ``markets``, ``defaults``, ``uncertain`` and ``series``,
plus an optional ``run`` mapping of command-line defaults. Series paths are
relative to the config file. See ``configs/`` for
complete examples and the README for the schema.
"""

from __future__ import annotations

import os
from dataclasses import fields
from typing import Any

import numpy as np
import pandas as pd
import yaml

from .network import (
    ConnectionSpec,
    Defaults,
    EnergyType,
    MarketSpec,
    SystemSpec,
    VertexSpec,
)
from .scenario import TimeSeries, read_series_csv


class ConfigError(ValueError):
    """A config file that cannot be turned into a SystemSpec."""


_VERTEX_FIELDS = {f.name for f in fields(VertexSpec)}
_MARKET_FIELDS = {f.name for f in fields(MarketSpec)}
_DEFAULT_FIELDS = {f.name for f in fields(Defaults)}

# short spellings accepted in config files
_ALIASES = {"from": "source", "to": "target"}


def _energy_types(raw) -> list[EnergyType]:
    out = []
    if isinstance(raw, dict):
        raw = [{"id": k, "label": v or ""} for k, v in raw.items()]
    for item in raw or []:
        if isinstance(item, str):
            out.append(EnergyType(item))
        else:
            out.append(EnergyType(str(item["id"]), str(item.get("label", ""))))
    return out


def _vertex(item: dict) -> VertexSpec:
    data = dict(item)
    unknown = set(data) - _VERTEX_FIELDS
    if unknown:
        raise ConfigError(f"vertex {data.get('id')!r}: unknown fields {sorted(unknown)}")
    if "id" not in data or "kind" not in data:
        raise ConfigError("every vertex needs an id and a kind")
    data["id"] = str(data["id"])
    return VertexSpec(**data)


def _connection(item) -> ConnectionSpec:
    if isinstance(item, (list, tuple)):
        if len(item) not in (3, 4):
            raise ConfigError(f"connection {item!r} must be [from, to, energy] or [from, to, energy, capacity]")
        return ConnectionSpec(*[str(x) if i < 3 else x for i, x in enumerate(item)])
    data = {_ALIASES.get(k, k): v for k, v in item.items()}
    try:
        return ConnectionSpec(str(data["source"]), str(data["target"]), str(data["energy"]),
                              data.get("capacity", float("inf")))
    except KeyError as exc:
        raise ConfigError(f"connection {item!r} lacks {exc}") from None


def _market(item: dict) -> MarketSpec:
    unknown = set(item) - _MARKET_FIELDS
    if unknown:
        raise ConfigError(f"market {item.get('id')!r}: unknown fields {sorted(unknown)}")
    return MarketSpec(**item)


def spec_from_dict(doc: dict[str, Any], base_dir: str = ".") -> SystemSpec:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    known = {"name", "energy_types", "vertices", "connections", "markets", "defaults", "uncertain", "series",
             "run"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    defaults = doc.get("defaults") or {}
    bad = set(defaults) - _DEFAULT_FIELDS
    if bad:
        raise ConfigError(f"unknown defaults {sorted(bad)}")
    try:
        spec = SystemSpec(
            name=str(doc.get("name", "system")),
            energy_types=_energy_types(doc.get("energy_types")),
            vertices=[_vertex(v) for v in doc.get("vertices") or []],
            connections=[_connection(c) for c in doc.get("connections") or []],
            markets=[_market(m) for m in doc.get("markets") or []],
            defaults=Defaults(**defaults),
            uncertain={k: [str(x) for x in v or []] for k, v in (doc.get("uncertain") or {}).items()},
            series={str(k): os.path.normpath(os.path.join(base_dir, str(v)))
                    for k, v in (doc.get("series") or {}).items()},
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return spec


def _read_yaml(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        try:
            return yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def load_spec(path: str | os.PathLike) -> SystemSpec:
    """Read a YAML system description."""
    return spec_from_dict(_read_yaml(path), os.path.dirname(os.path.abspath(path)))


def load_config(path: str | os.PathLike) -> tuple[SystemSpec, dict[str, Any]]:
    """System description and the ``run`` section of a config file."""
    doc = _read_yaml(path)
    spec = spec_from_dict(doc, os.path.dirname(os.path.abspath(path)))
    run = doc.get("run") or {}
    if not isinstance(run, dict):
        raise ConfigError("the run section must be a mapping")
    return spec, dict(run)


def load_series(spec: SystemSpec, data_dir: str | os.PathLike | None = None) -> dict[str, TimeSeries]:
    """All series named in ``spec.series``, aligned to a common start.

    With ``data_dir`` the files are looked up there by base name instead.
    """
    out = {}
    for name, path in sorted(spec.series.items()):
        if data_dir is not None:
            path = os.path.join(data_dir, os.path.basename(path))
        out[name] = read_series_csv(path, name)
    if out:
        starts = {s.start for s in out.values()}
        if len(starts) > 1:
            raise ConfigError("series do not share a start timestamp")
        missing = spec.referenced_series() - set(out)
        if missing:
            raise ConfigError(f"series referenced but not listed: {sorted(missing)}")
    return out


def series_start(series: dict[str, TimeSeries]) -> pd.Timestamp:
    return next(iter(series.values())).start


def series_length(series: dict[str, TimeSeries]) -> int:
    return min(len(s) for s in series.values())


def series_window(series: dict[str, TimeSeries], offset: int, length: int) -> dict[str, np.ndarray]:
    return {k: s.slice(offset, length).values.copy() for k, s in series.items()}


def dump_spec(spec: SystemSpec) -> dict:
    """Plain-data form of ``spec`` suitable for ``yaml.safe_dump``."""
    def param(p):
        if isinstance(p, float) and np.isinf(p):
            return "inf" if p > 0 else "-inf"
        return str(p) if not isinstance(p, (int, float)) else p

    vertices = []
    for v in spec.vertices:
        d: dict[str, Any] = {"id": v.id, "kind": v.kind}
        if v.inflow:
            d["inflow"] = {f: [param(lo), param(hi)] for f, (lo, hi) in v.inflow.items()}
        if v.outflow:
            d["outflow"] = {f: [param(lo), param(hi)] for f, (lo, hi) in v.outflow.items()}
        if v.conversion:
            d["conversion"] = {f"{a}->{b}": phi for (a, b), phi in v.conversion.items()}
        for key in ("inflow_price", "outflow_price"):
            val = getattr(v, key)
            if val:
                d[key] = {f: param(p) for f, p in val.items()}
        for key in ("ramp_up", "ramp_down", "initial_output"):
            if getattr(v, key):
                d[key] = dict(getattr(v, key))
        for key in ("start_cost", "min_up", "min_down", "initial_status", "initial_hold", "loss",
                    "initial_level", "target_level"):
            if getattr(v, key):
                d[key] = getattr(v, key)
        for key in ("excludes", "depends"):
            if getattr(v, key):
                d[key] = list(getattr(v, key))
        for key in ("first_stage", "renewable", "artificial"):
            if getattr(v, key):
                d[key] = True
        if v.energy:
            d["energy"] = v.energy
        for key in ("capacity", "max_flow"):
            p = getattr(v, key)
            if not (isinstance(p, float) and np.isinf(p)):
                d[key] = param(p)
        vertices.append(d)
    return {
        "name": spec.name,
        "energy_types": [{"id": e.id, "label": e.label} for e in spec.energy_types],
        "vertices": vertices,
        "connections": [[c.source, c.target, c.energy] + ([] if np.isinf(c.capacity) else [c.capacity])
                        for c in spec.connections],
        "markets": [{"id": m.id, "side": m.side, "energy": m.energy, "price": param(m.price),
                     "penalty": m.penalty} for m in spec.markets],
        "defaults": {f.name: getattr(spec.defaults, f.name) for f in fields(Defaults)},
        "uncertain": {k: list(v) for k, v in spec.uncertain.items()},
    }

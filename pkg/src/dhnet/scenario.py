"""Scenario sets built from history and out-of-sample sample sets.

Series are hourly. A scenario bundle maps quantity names (prices, heat
demand per site, solar or waste heat) to arrays of equal length.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

WEEK = 168
HISTORY_WEIGHTS = (0.5, 0.33, 0.17)
PRICE_TOL = 1e-9


@dataclass
class TimeSeries:
    start: pd.Timestamp
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.start = pd.Timestamp(self.start)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("time series values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.label!r} contains missing or non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self.values), freq="h")

    def index_of(self, when) -> int:
        delta = pd.Timestamp(when) - self.start
        hours = delta / pd.Timedelta(hours=1)
        if hours != int(hours):
            raise ValueError("timestamp is not on the hourly grid")
        return int(hours)

    def slice(self, offset: int, length: int) -> "TimeSeries":
        if offset < 0 or offset + length > len(self.values):
            raise ValueError(
                f"series {self.label!r} has {len(self.values)} hours, need [{offset}, {offset + length})")
        return TimeSeries(self.start + pd.Timedelta(hours=offset), self.values[offset:offset + length], self.label)

    def weeks_before(self, offset: int, n: int = 3) -> np.ndarray:
        """``n`` full weeks ending right before ``offset``, oldest first, shape (n, 168)."""
        if offset - n * WEEK < 0:
            raise ValueError(f"series {self.label!r}: need {n} weeks of history before hour {offset}")
        return self.values[offset - n * WEEK: offset].reshape(n, WEEK).copy()


@dataclass
class Scenario:
    probability: float
    data: dict[str, np.ndarray]
    price_index: int | None = None
    heat_index: int | None = None


@dataclass
class ScenarioSet:
    start: pd.Timestamp
    scenarios: list[Scenario]

    def __post_init__(self):
        self.start = pd.Timestamp(self.start)
        if not self.scenarios:
            raise ValueError("a scenario set needs at least one scenario")
        lengths = {len(a) for s in self.scenarios for a in s.data.values()}
        if len(lengths) > 1:
            raise ValueError("all scenario bundles must cover the same horizon")
        names = [sorted(s.data) for s in self.scenarios]
        if any(n != names[0] for n in names):
            raise ValueError("all scenario bundles must carry the same quantities")

    @classmethod
    def single(cls, data: Mapping[str, Sequence[float]], start="2000-01-01") -> "ScenarioSet":
        return cls(start, [Scenario(1.0, {k: np.asarray(v, float) for k, v in data.items()})])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios], dtype=float)

    @property
    def size(self) -> int:
        return len(self.scenarios)

    @property
    def horizon(self) -> int:
        first = self.scenarios[0].data
        return len(next(iter(first.values()))) if first else 0

    @property
    def quantities(self) -> list[str]:
        return sorted(self.scenarios[0].data)

    def matrix(self, name: str) -> np.ndarray:
        """Values of ``name`` as an array of shape (scenarios, periods)."""
        try:
            return np.vstack([s.data[name] for s in self.scenarios])
        except KeyError:
            raise KeyError(f"scenario set has no quantity {name!r}") from None

    def bundle(self, w: int) -> dict[str, np.ndarray]:
        return self.scenarios[w].data

    def window(self, offset: int, length: int) -> "ScenarioSet":
        return ScenarioSet(
            self.start + pd.Timedelta(hours=offset),
            [Scenario(s.probability, {k: v[offset:offset + length].copy() for k, v in s.data.items()},
                      s.price_index, s.heat_index) for s in self.scenarios],
        )

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.horizon, freq="h")


def _week_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("three non-negative week weights are required")
    return w


def weighted_history_scenarios(
    history: Mapping[str, np.ndarray],
    price: Sequence[str],
    heat: Sequence[str],
    static: Mapping[str, np.ndarray] | None = None,
    weights: Sequence[float] = HISTORY_WEIGHTS,
    start="2000-01-01",
    horizon: int | None = None,
) -> ScenarioSet:
    """Price weeks crossed with heat-flow weeks.

    ``history[name]`` has shape (3, H) with the oldest week first. Scenario
    ``w = 3*k + j`` takes price week ``k`` and heat-flow week ``j``, both
    counted from the most recent week, and gets probability
    ``weight[k] * weight[j]``, renormalised to sum to one. Heat-flow
    quantities move together so that their cross-correlation survives.
    A group without quantities collapses to a single level of weight one.
    """
    wts = _week_weights(weights)
    arrays = {}
    for name in list(price) + list(heat):
        a = np.asarray(history[name], dtype=float)
        if a.ndim != 2 or a.shape[0] != 3:
            raise ValueError(f"history for {name!r} must have shape (3, H)")
        arrays[name] = a[::-1]  # most recent first
    lengths = {a.shape[1] for a in arrays.values()}
    if static:
        lengths |= {len(np.asarray(v)) for v in static.values()}
    if horizon is None:
        if len(lengths) > 1:
            raise ValueError("history and static series disagree on the horizon")
        horizon = lengths.pop() if lengths else 0
    elif any(n < horizon for n in lengths):
        raise ValueError("history shorter than the requested horizon")
    price_levels = range(3) if price else [None]
    heat_levels = range(3) if heat else [None]
    raw = []
    for k in price_levels:
        for j in heat_levels:
            data = {}
            for name in price:
                data[name] = arrays[name][k, :horizon].copy()
            for name in heat:
                data[name] = arrays[name][j, :horizon].copy()
            for name, v in (static or {}).items():
                data[name] = np.asarray(v, dtype=float)[:horizon].copy()
            p = (wts[k] if k is not None else 1.0) * (wts[j] if j is not None else 1.0)
            raw.append(Scenario(p, data, k, j))
    total = sum(s.probability for s in raw)
    for s in raw:
        s.probability /= total
    return ScenarioSet(start, raw)


def expected_scenario(sset: ScenarioSet) -> ScenarioSet:
    """One scenario holding the probability-weighted mean of every quantity."""
    if sset.size == 1:
        s = sset.scenarios[0]
        return ScenarioSet(sset.start, [Scenario(1.0, {k: v.copy() for k, v in s.data.items()},
                                                 s.price_index, s.heat_index)])
    p = sset.probabilities
    data = {name: p @ sset.matrix(name) for name in sset.quantities}
    return ScenarioSet(sset.start, [Scenario(1.0, data)])


# ---------------------------------------------------------------------------
# out-of-sample samples


@dataclass
class SampleSet:
    method: str
    seed: int
    start: pd.Timestamp
    samples: list[dict[str, np.ndarray]] = field(default_factory=list)
    origin: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def as_scenario_set(self, i: int) -> ScenarioSet:
        return ScenarioSet.single(self.samples[i], self.start)

    def write(self, root: str | os.PathLike) -> list[str]:
        """Write ``<root>/samples/<method>/<index>/<quantity>.csv``."""
        paths = []
        for i, bundle in enumerate(self.samples):
            d = os.path.join(root, "samples", self.method, str(i))
            os.makedirs(d, exist_ok=True)
            for name in sorted(bundle):
                path = os.path.join(d, f"{name}.csv")
                write_series_csv(path, TimeSeries(self.start, bundle[name], name))
                paths.append(path)
        return paths


def _rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))


def triangular_supports(weeks: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-hour (low, mode, high) from history of shape (3, H)."""
    lo = weeks.min(axis=0)
    hi = weeks.max(axis=0)
    return lo - 0.05 * np.abs(lo), np.median(weeks, axis=0), hi + 0.05 * np.abs(hi)


def sample_triangular(
    history: Mapping[str, np.ndarray],
    count: int,
    seed: int,
    clamp: Sequence[str] = (),
    static: Mapping[str, np.ndarray] | None = None,
    start="2000-01-01",
) -> SampleSet:
    """Independent hourly draws from triangular distributions.

    For hour ``h`` the support widens the observed range of the three weeks
    by 5 % on each side; the mode is their median. Quantities in ``clamp``
    are floored at zero after drawing.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    names = sorted(history)
    supports = {n: triangular_supports(np.asarray(history[n], dtype=float)) for n in names}
    out = SampleSet("triangular", int(seed), pd.Timestamp(start))
    for i in range(count):
        rng = _rng(seed, i)
        bundle = {}
        for n in names:
            lo, mode, hi = supports[n]
            u = rng.random(len(lo))
            bundle[n] = _triangular_ppf(u, lo, mode, hi)
            if n in clamp:
                bundle[n] = np.maximum(bundle[n], 0.0)
        for n, v in (static or {}).items():
            bundle[n] = np.asarray(v, dtype=float).copy()
        out.samples.append(bundle)
        out.origin.append("triangular")
    return out


def _triangular_ppf(u, lo, mode, hi):
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    fc = np.where(width > 0, (mode - lo) / safe, 0.5)
    left = lo + np.sqrt(u * safe * (mode - lo))
    right = hi - np.sqrt((1 - u) * safe * (hi - mode))
    x = np.where(u < fc, left, right)
    return np.where(width > 0, x, lo)


def day_class(ts: pd.Timestamp) -> str:
    return "weekend" if ts.dayofweek >= 5 else "weekday"


def block_bootstrap(
    history: Mapping[str, np.ndarray],
    history_start,
    count: int,
    seed: int,
    start=None,
    days: int = 7,
    block_hours: int = 4,
    static: Mapping[str, np.ndarray] | None = None,
) -> SampleSet:
    """Daily profiles stitched from historical four-hour blocks.

    ``history[name]`` is an hourly array covering whole days from
    ``history_start``. Each output day is made of ``24 / block_hours``
    blocks; block ``b`` comes from a historical day of the same
    weekday/weekend class at the same time-of-day slot, drawn uniformly.
    All quantities share the draw. The first ``(count + 1) // 2`` samples
    draw from the first half of the history, the rest from the second.
    """
    if 24 % block_hours:
        raise ValueError("block length must divide 24")
    if count < 1:
        raise ValueError("count must be at least 1")
    names = sorted(history)
    arrays = {n: np.asarray(history[n], dtype=float) for n in names}
    n_hours = {len(a) for a in arrays.values()}
    if len(n_hours) != 1:
        raise ValueError("all history series must have the same length")
    n_hours = n_hours.pop()
    if n_hours % 24:
        raise ValueError("history must cover whole days")
    n_days = n_hours // 24
    hist_start = pd.Timestamp(history_start)
    start = pd.Timestamp(start) if start is not None else hist_start
    hist_class = [day_class(hist_start + pd.Timedelta(days=d)) for d in range(n_days)]
    halves = [list(range(0, n_days // 2)), list(range(n_days // 2, n_days))] if n_days > 1 else [[0], [0]]
    slots = 24 // block_hours
    out_class = [day_class(start + pd.Timedelta(days=d)) for d in range(days)]
    n_first = (count + 1) // 2
    out = SampleSet("bootstrap", int(seed), start)
    for i in range(count):
        rng = _rng(seed, i)
        pool_days = halves[0] if i < n_first else halves[1]
        bundle = {n: np.empty(days * 24) for n in names}
        for d in range(days):
            cands = [h for h in pool_days if hist_class[h] == out_class[d]]
            if not cands:
                raise ValueError(f"no {out_class[d]} blocks available in history half {0 if i < n_first else 1}")
            for b in range(slots):
                src = cands[int(rng.integers(len(cands)))]
                lo = src * 24 + b * block_hours
                dst = d * 24 + b * block_hours
                for n in names:
                    bundle[n][dst:dst + block_hours] = arrays[n][lo:lo + block_hours]
        for n, v in (static or {}).items():
            bundle[n] = np.asarray(v, dtype=float).copy()
        out.samples.append(bundle)
        out.origin.append("first-half" if i < n_first else "second-half")
    return out


# ---------------------------------------------------------------------------
# CSV


def read_series_csv(path: str | os.PathLike, label: str | None = None) -> TimeSeries:
    frame = pd.read_csv(path)
    if list(frame.columns) != ["timestamp", "value"]:
        raise ValueError(f"{path}: expected header 'timestamp,value'")
    stamps = pd.to_datetime(frame["timestamp"])
    if len(stamps) > 1:
        step = stamps.diff().iloc[1:]
        if not (step == pd.Timedelta(hours=1)).all():
            raise ValueError(f"{path}: rows must be consecutive hours")
    label = label or os.path.splitext(os.path.basename(path))[0]
    return TimeSeries(stamps.iloc[0] if len(stamps) else pd.Timestamp(0), frame["value"].to_numpy(float), label)


def write_series_csv(path: str | os.PathLike, series: TimeSeries) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("timestamp,value\n")
        for ts, v in zip(series.timestamps(), series.values):
            fh.write(f"{ts.isoformat()},{float(v)!r}\n")

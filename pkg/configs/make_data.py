"""Regenerate the synthetic hourly series used by the example configs.

The shipped systems mirror the structure and unit data of three Danish
district-heating systems, but their operational data is proprietary. These
series are smooth synthetic stand-ins: a heating season with a daily demand
profile, day-ahead prices with morning and evening peaks, and solar and
waste-heat availability. Eight weeks starting on a Monday are generated:
enough for three history weeks before a two-week evaluation period, and
for bootstrap pools of two weeks on either side of the history weeks.

    python configs/make_data.py
"""

import os

import numpy as np
import pandas as pd

START = pd.Timestamp("2021-01-04 00:00")
HOURS = 8 * 168
HERE = os.path.dirname(os.path.abspath(__file__))


def _hours():
    idx = pd.date_range(START, periods=HOURS, freq="h")
    hod = idx.hour.to_numpy()
    dow = idx.dayofweek.to_numpy()
    day = np.arange(HOURS) / 24.0
    return idx, hod, dow, day


def price(rng):
    _, hod, dow, day = _hours()
    shape = 45 + 18 * np.exp(-((hod - 8) ** 2) / 6) + 25 * np.exp(-((hod - 18) ** 2) / 5) - 12 * (hod < 5)
    shape = shape - 8 * (dow >= 5)
    weather = np.cumsum(rng.normal(0, 2.0, HOURS // 24)).repeat(24)
    return shape + weather + rng.normal(0, 4.0, HOURS) + 5 * np.sin(day / 3)


def heat(rng, mean, swing):
    _, hod, dow, day = _hours()
    profile = 1 + 0.15 * np.exp(-((hod - 7) ** 2) / 4) + 0.08 * np.exp(-((hod - 19) ** 2) / 6) - 0.12 * (hod < 5)
    cold = np.cumsum(rng.normal(0, 0.05, HOURS // 24)).repeat(24)
    level = mean * (1 + swing * np.sin(day / 5.0) + cold)
    return np.maximum(level * profile + rng.normal(0, 0.03 * mean, HOURS), 0.05 * mean)


def solar(rng, peak):
    _, hod, _, _ = _hours()
    clear = np.clip(np.sin((hod - 8) / 8 * np.pi), 0, None)
    cloud = rng.uniform(0.2, 1.0, HOURS // 24).repeat(24)
    return peak * clear * cloud


def waste(rng, mean):
    return np.clip(mean + np.cumsum(rng.normal(0, 0.2, HOURS)) * 0.1 + rng.normal(0, 0.3, HOURS), 0, None)


def write(system, name, values):
    d = os.path.join(HERE, "data", system)
    os.makedirs(d, exist_ok=True)
    idx = pd.date_range(START, periods=HOURS, freq="h")
    with open(os.path.join(d, f"{name}.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("timestamp,value\n")
        for ts, v in zip(idx, values):
            fh.write(f"{ts.isoformat()},{round(float(v), 4)!r}\n")


def main():
    rng = np.random.default_rng(20210104)
    write("middelfart", "price", price(rng))
    write("middelfart", "heat_d1", heat(rng, 4.6, 0.12))
    write("middelfart", "heat_d2", heat(rng, 2.8, 0.12))

    rng = np.random.default_rng(20210105)
    write("bronderslev", "price", price(rng))
    write("bronderslev", "heat_d1", heat(rng, 11.0, 0.15))
    write("bronderslev", "heat_d2", heat(rng, 8.0, 0.15))
    write("bronderslev", "heat_d3", heat(rng, 4.0, 0.15))
    write("bronderslev", "solar", solar(rng, 6.0))

    rng = np.random.default_rng(20210106)
    write("hillerod", "price", price(rng))
    for k, mean in enumerate((24.0, 3.0, 1.2, 9.0, 12.0, 8.0, 1.1, 1.0), start=1):
        write("hillerod", f"heat_d{k}", heat(rng, mean, 0.15))
    write("hillerod", "solar", solar(rng, 4.0))
    write("hillerod", "waste_heat", waste(rng, 6.0))


if __name__ == "__main__":
    main()

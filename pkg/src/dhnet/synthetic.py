"""Small synthetic systems and series for tests, demos and benchmarks."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .network import (
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
from .scenario import ScenarioSet, weighted_history_scenarios

ENERGIES = [EnergyType("H", "heat"), EnergyType("EL", "electricity"), EnergyType("NG", "natural gas"),
            EnergyType("WC", "wood chips"), EnergyType("SOL", "solar heat")]


def mini_system(first_stage_chp: bool = True) -> SystemSpec:
    """Five units (two with commitment), one storage and two demand sites.

    A gas CHP sells to the day-ahead market, a wood-chip boiler, a gas
    boiler, an electric boiler buying at the day-ahead price and a solar
    field cover two heat demand sites directly or through a storage.
    """
    price = SeriesRef("price")
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": np.inf}),
        VertexSpec("e_WC", SOURCE, outflow={"WC": np.inf}),
        VertexSpec("e_EL", SOURCE, outflow={"EL": np.inf}, outflow_price={"EL": price}),
        VertexSpec("e_SOL", SOURCE, outflow={"SOL": (SeriesRef("solar"), SeriesRef("solar"))}),
        VertexSpec("u_CHP", UNIT_WC, inflow={"NG": (6.0, 14.0)}, outflow={"H": (2.7, 6.3), "EL": (2.4, 5.6)},
                   conversion={"NG->H": 0.45, "NG->EL": 0.4}, outflow_price={"H": 70.0},
                   start_cost=150.0, min_up=3, min_down=2, first_stage=first_stage_chp),
        VertexSpec("u_WC", UNIT_WC, inflow={"WC": (2.0, 8.0)}, outflow={"H": (1.8, 7.2)},
                   conversion={"WC->H": 0.9}, outflow_price={"H": 25.0},
                   start_cost=60.0, min_up=4, min_down=4, renewable=True),
        VertexSpec("u_GB", UNIT, inflow={"NG": 12.0}, outflow={"H": 11.4}, conversion={"NG->H": 0.95},
                   outflow_price={"H": 55.0}),
        VertexSpec("u_EB", UNIT, inflow={"EL": 5.0}, outflow={"H": 4.95}, conversion={"EL->H": 0.99}),
        VertexSpec("u_SOL", UNIT, inflow={"SOL": np.inf}, outflow={"H": np.inf}, conversion={"SOL->H": 1.0},
                   renewable=True),
        VertexSpec("s_1", STORAGE, energy="H", capacity=30.0, loss=0.01, max_flow=10.0,
                   initial_level=5.0, target_level=5.0),
        VertexSpec("d_H1", DEMAND, inflow={"H": (SeriesRef("heat_d1"), SeriesRef("heat_d1"))}),
        VertexSpec("d_H2", DEMAND, inflow={"H": (SeriesRef("heat_d2"), SeriesRef("heat_d2"))}),
    ]
    C = [ConnectionSpec(*c) for c in [
        ("e_NG", "u_CHP", "NG"), ("e_NG", "u_GB", "NG"), ("e_WC", "u_WC", "WC"), ("e_EL", "u_EB", "EL"),
        ("e_SOL", "u_SOL", "SOL"),
        ("u_CHP", "d_H1", "H"), ("u_WC", "d_H1", "H"), ("u_GB", "d_H2", "H"), ("u_EB", "d_H2", "H"),
        ("u_SOL", "d_H1", "H"), ("u_CHP", "s_1", "H"), ("u_WC", "s_1", "H"), ("u_SOL", "s_1", "H"),
        ("s_1", "d_H1", "H"), ("s_1", "d_H2", "H"), ("u_WC", "d_H2", "H"),
        ("u_CHP", "spot", "EL"),
    ]]
    M = [MarketSpec("spot", "selling", "EL", price, penalty=600.0)]
    return SystemSpec("mini", list(ENERGIES), V, C, M, Defaults(),
                      uncertain={"price": ["price"], "heat": ["heat_d1", "heat_d2", "solar"]})


def series(hours: int, seed: int = 0, heat_scale: float = 1.0) -> dict[str, np.ndarray]:
    """Hourly price, two heat demands and solar availability."""
    rng = np.random.default_rng(seed)
    h = np.arange(hours)
    hod = h % 24
    price = 50 + 20 * np.exp(-((hod - 8) ** 2) / 6) + 25 * np.exp(-((hod - 18) ** 2) / 5) - 15 * (hod < 5)
    price = price + np.cumsum(rng.normal(0, 1.5, hours)) * 0.3 + rng.normal(0, 5, hours)
    base = 1 + 0.2 * np.sin(h / 40.0)
    d1 = heat_scale * (8 + 2.5 * np.exp(-((hod - 7) ** 2) / 5)) * base + rng.normal(0, 0.4, hours)
    d2 = heat_scale * (4 + 1.5 * np.exp(-((hod - 19) ** 2) / 6)) * base + rng.normal(0, 0.3, hours)
    sol = 6 * np.clip(np.sin((hod - 8) / 8 * np.pi), 0, None) * rng.uniform(0.3, 1.0, hours // 24 + 1).repeat(24)[:hours]
    return {"price": price, "heat_d1": np.maximum(d1, 0.0), "heat_d2": np.maximum(d2, 0.0), "solar": sol}


def history_scenarios(spec: SystemSpec, horizon: int, seed: int = 0, start="2021-01-04") -> ScenarioSet:
    """Nine weighted scenarios built from three synthetic history weeks."""
    hist = {k: np.vstack([v[i * 168:i * 168 + horizon] for i in range(3)])
            for k, v in series(3 * 168, seed).items()}
    return weighted_history_scenarios(hist, spec.uncertain.get("price", []), spec.uncertain.get("heat", []),
                                      start=pd.Timestamp(start))


def two_unit_system(rng: np.random.Generator, bidding_ready: bool = False) -> SystemSpec:
    """A CHP with commitment and a boiler serving one demand site.

    Parameters are drawn from ``rng``. With ``bidding_ready`` the CHP is a
    first-stage unit and the market has no imbalance vertices, so that
    operational non-anticipativity fixes the day-ahead position across
    scenarios.
    """
    price = SeriesRef("price")
    eta_h = rng.uniform(0.35, 0.5)
    eta_e = rng.uniform(0.3, 0.45)
    hi = rng.uniform(6.0, 14.0)
    V = [
        VertexSpec("e_NG", SOURCE, outflow={"NG": np.inf}, outflow_price={"NG": rng.uniform(15, 35)}),
        VertexSpec("u_CHP", UNIT_WC, inflow={"NG": (rng.uniform(0.3, 0.6) * hi, hi)},
                   outflow={"H": (0.0, eta_h * hi), "EL": (0.0, eta_e * hi)},
                   conversion={"NG->H": eta_h, "NG->EL": eta_e}, start_cost=rng.uniform(20, 200),
                   min_up=int(rng.integers(0, 3)), min_down=int(rng.integers(0, 3)), first_stage=True),
        VertexSpec("u_GB", UNIT, inflow={"NG": 12.0}, outflow={"H": np.inf}, conversion={"NG->H": 0.95},
                   outflow_price={"H": rng.uniform(5, 30)}),
        VertexSpec("d_H", DEMAND, inflow={"H": (SeriesRef("heat"), SeriesRef("heat"))}),
    ]
    C = [ConnectionSpec(*c) for c in [("e_NG", "u_CHP", "NG"), ("e_NG", "u_GB", "NG"), ("u_CHP", "d_H", "H"),
                                      ("u_GB", "d_H", "H"), ("u_CHP", "spot", "EL")]]
    M = [MarketSpec("spot", "selling", "EL", price, penalty=600.0, imbalance=not bidding_ready)]
    return SystemSpec("two-unit", list(ENERGIES[:3]), V, C, M, Defaults(),
                      uncertain={"price": ["price"], "heat": ["heat"]})


def two_unit_scenarios(rng: np.random.Generator, horizon: int) -> ScenarioSet:
    """Nine scenarios of price and heat demand for :func:`two_unit_system`."""
    hod = np.arange(horizon) % 24
    base_p = 40 + 25 * np.exp(-((hod - 17) ** 2) / 8)
    base_h = 6 + 2 * np.exp(-((hod - 7) ** 2) / 6)
    hist = {
        "price": np.vstack([base_p + rng.normal(0, 15, horizon) for _ in range(3)]),
        "heat": np.vstack([np.maximum(base_h + rng.normal(0, 1.5, horizon), 0.0) for _ in range(3)]),
    }
    return weighted_history_scenarios(hist, ["price"], ["heat"])

"""A week of daily re-planning settled on realized data.

Every morning the planner solves a two-day window against nine scenarios
built from the three previous weeks, commits to the first day, and the
day is then settled on what really happened. Unit states and storage
levels carry into the next morning. The same week planned with perfect
foresight gives a lower bound.

    python demos/rolling_week.py
"""

import numpy as np

from dhnet import synthetic
from dhnet.evaluate import summarize
from dhnet.rolling import RollConfig, roll_horizon
from dhnet.scenario import ScenarioSet, weighted_history_scenarios
from dhnet.solver import SolveParams

spec = synthetic.mini_system()
data = synthetic.series(4 * 168 + 48, seed=7)
origin = 3 * 168
realized = ScenarioSet.single({k: v[origin:origin + 168] for k, v in data.items()}, start="2021-01-25")
params = SolveParams(gap=1e-4, milp_engine="highs")


def history(offset, length):
    at = origin + offset
    weeks = {k: np.vstack([data[k][at - w * 168:at - w * 168 + length] for w in (1, 2, 3)])
             for k in spec.uncertain["price"] + spec.uncertain["heat"]}
    return weighted_history_scenarios(weeks, spec.uncertain["price"], spec.uncertain["heat"])


def clairvoyant(offset, length):
    return realized.window(offset, length)


for name, provider, mode in (("stochastic", history, "operational"),
                             ("perfect foresight", clairvoyant, "deterministic")):
    cfg = RollConfig(window=48, step=24, total=168, mode=mode, params=params)
    trace = roll_horizon(spec, provider, realized, cfg)
    m = summarize(trace)
    print(f"{name}: {len(trace.iterations)} days, realized cost {trace.realized_cost:.2f} EUR, "
          f"heat {m.heat:.1f} MWh, imbalance {sum(it.imbalance for it in trace.iterations):.2f} MWh")
    levels = [it.state_out.levels["s_1"] for it in trace.iterations]
    print("  storage each evening:", " ".join(f"{x:5.1f}" for x in levels))

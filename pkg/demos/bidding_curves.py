"""Day-ahead bids from price scenarios.

In bidding mode the day-ahead position may differ per scenario, but it
must grow with the scenario price: sorting the distinct prices of an hour
gives a step curve. After the market clears, the accepted quantity is the
step at or below the realized price, and the rest of the day is
re-planned around it.

    python demos/bidding_curves.py
"""

import numpy as np

from dhnet import synthetic
from dhnet.evaluate import solve_plan
from dhnet.model import first_stage_of, settle_bids
from dhnet.rolling import recourse_evaluate
from dhnet.scenario import ScenarioSet
from dhnet.solver import SolveParams

spec = synthetic.mini_system()
scenarios = synthetic.history_scenarios(spec, 24)
params = SolveParams(gap=1e-6, milp_engine="highs")

plan = solve_plan(spec, scenarios, "bidding", params=params)
print(f"bidding plan: {plan.outcome.status}, expected cost {plan.objective:.2f} EUR\n")

policy = first_stage_of(plan.schedule, "bidding")
for t in (6, 12, 18):
    curve = policy.curves[("spot", t)]
    steps = ", ".join(f"{q:.2f} MWh at >= {p:.2f}" for p, q in curve)
    print(f"hour {t:2d}: {steps}")

# settle against a day that was not among the scenarios
realized_data = synthetic.series(24, seed=42)
price = realized_data["price"]
accepted = [settle_bids(policy.curves[("spot", t)], price[t], "selling") for t in range(24)]
print(f"\naccepted {sum(accepted):.2f} MWh over the day")

realized = ScenarioSet.single(realized_data, start=scenarios.start)
cost, sched = recourse_evaluate(spec, policy, realized, params=params)
print(f"realized cost {cost:.2f} EUR, imbalance {sched.imbalance()[0]:.2f} MWh")
print(f"positions equal the accepted bids: {np.allclose(sched.market_positions['spot'][:, 0], accepted)}")

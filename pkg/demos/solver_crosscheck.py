"""The bundled branch and bound against HiGHS on an exported model.

The dispatch model is written as MPS, read back, and solved three ways:
the bundled solver on the in-memory model, the bundled solver on the
parsed file, and HiGHS on the file.

    python demos/solver_crosscheck.py
"""

import os
import tempfile

import highspy

from dhnet import synthetic
from dhnet.model import ModelOptions, build_model
from dhnet.network import build_network
from dhnet.solver import SolveParams, solve_milp
from dhnet.solver.mps import parse_mps, write_mps

spec = synthetic.mini_system()
scenarios = synthetic.history_scenarios(spec, 12)
net = build_network(spec, 12, 12, scenarios)
problem = build_model(net, ModelOptions(mode="operational"))
print(problem)

direct = solve_milp(problem, SolveParams(gap=1e-6))
print(f"bundled, in memory: {direct.objective:.6f} ({direct.nodes} nodes, {direct.wall_time:.1f} s)")

with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "mini.mps")
    write_mps(problem, path)
    again = solve_milp(parse_mps(path), SolveParams(gap=1e-6))
    print(f"bundled, from MPS:  {again.objective:.6f}")

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 1e-6)
    h.readModel(path)
    h.run()
    print(f"HiGHS, from MPS:    {h.getInfo().objective_function_value:.6f}")

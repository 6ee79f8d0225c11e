"""Solve the minimax game on the platform for a few values of gamma.

Large gamma makes disturbance expensive, so the adversary barely acts and
the planned motion reaches the goal. Tiny gamma lets the adversary push
the platform far off course. Each solve takes a few seconds.

    python demos/idg_gamma_comparison.py
"""

from pathlib import Path

import numpy as np

from robust_idg import idg
from robust_idg.config import load_config
from robust_idg.exceptions import NoProgress

ROOT = Path(__file__).resolve().parents[1]

cfg = load_config(ROOT / "configs" / "mecanum_idg.yaml")
model = cfg.build_model()
x0 = np.asarray(cfg.experiment.x0, dtype=float)
goal = np.asarray(cfg.experiment.goal)
us0 = cfg.initial_controls(model)

print("   gamma   iters   distance (m)   max |v|   max |u|")
for gamma in (10.0, 1.5, 1e-5):
    cost = cfg.build_cost(gamma)
    try:
        traj, _, report = idg.idg_solve(model, cost, x0, us0, options=cfg.solver.options(cfg.experiment.seed))
    except NoProgress as exc:
        traj, _, report = exc.result
    d = np.linalg.norm(traj.xs[-1, :2] - goal[:2])
    v = np.abs(traj.vs).max()
    u = np.abs(traj.us).max()
    print(f"{gamma:8g}   {report.iterations:5d}   {d:12.4f}   {v:7.3g}   {u:7.3g}")

# the adversary's force grows as gamma drops, and below some critical gamma
# the protagonist can no longer hold the 0.1 m goal region

"""Drive the mecanum platform from rest at the origin to (2, 1.5) with
nominal iLQG and look at how the solve got there.

    python demos/nominal_goal_reaching.py
"""

from pathlib import Path

import numpy as np

from robust_idg import ilqg
from robust_idg.cli import trajectory_rows, write_csv
from robust_idg.config import load_config
from robust_idg.trajectory import rollout

ROOT = Path(__file__).resolve().parents[1]

# the commented config holds the settings: T=150, c=0.5, alpha=1e-4
cfg = load_config(ROOT / "configs" / "mecanum_ilqg.yaml")
model = cfg.build_model()
cost = cfg.build_cost().nominal
x0 = np.asarray(cfg.experiment.x0, dtype=float)
goal = np.asarray(cfg.experiment.goal)

# the starting guess pushes with a constant body force mapped to wheel torques
us0 = cfg.initial_controls(model)
start = rollout(model, cost, x0, us0)
print(f"initial guess: cost {start.cost:.3f}, ends {np.linalg.norm(start.xs[-1, :2] - goal[:2]):.3f} m from the goal")

traj, gains, report = ilqg.solve(model, cost, x0, us0, cfg.solver.options(cfg.experiment.seed))

# every iteration either takes a step (eta above c) or raises rho and retries
print("iter  accepted      cost       eta      rho")
for i, (acc, J, eta, rho) in enumerate(zip(report.accepted, report.cost_trace, report.eta_trace, report.rho_trace), 1):
    print(f"{i:4d}  {str(acc):8s}  {J:9.4f}  {eta:8.3f}  {rho:8.3g}")

d = np.linalg.norm(traj.xs[-1, :2] - goal[:2])
print(f"stopped after {report.iterations} iterations ({report.reason}); final distance {d:.4f} m")
print(f"heading at the end: {np.degrees(traj.xs[-1, 2]):.2f} deg, speed {np.linalg.norm(traj.xs[-1, 3:5]):.3f} m/s")

out = ROOT / "runs" / "demo_nominal"
out.mkdir(parents=True, exist_ok=True)
write_csv(out / "trajectory.csv", *trajectory_rows(model, traj))
print(f"trajectory written to {out / 'trajectory.csv'}")

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the lines are
repeated in the terminal summary.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from fdcheck import central_grad, central_jac, rel_err
from robust_idg import checks, cli, idg, oracle
from robust_idg import robustness as rb
from robust_idg.config import load_config
from robust_idg.costs import CostParams, GoalCost, QuadraticCost, QuadraticGameParams
from robust_idg.dynamics import MecanumPlatform
from robust_idg.exceptions import NoProgress
from robust_idg.trajectory import RegState, SolverOptions, update_rho

SUCCESS_GAMMAS = (10.0, 5.0, 3.0, 1.5)
FAILURE_GAMMAS = (1e-5, 2e-5)
GOAL = (2.0, 1.5, 0.0)


def record(log, number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {number} {name}: {detail}"
    print(line)
    log.append(line)
    return ok


@pytest.fixture(scope="module")
def nominal_run(configs_dir, tmp_path_factory):
    cfg = load_config(configs_dir / "mecanum_ilqg.yaml")
    cfg = cfg.with_overrides(output_dir=str(tmp_path_factory.mktemp("ilqg")))
    return cli.cmd_ilqg(cfg)


@pytest.fixture(scope="module")
def band_runs(configs_dir, tmp_path_factory):
    """iDG summaries per gamma; a solver failure counts as not reaching."""
    base = load_config(configs_dir / "mecanum_idg.yaml")
    out = tmp_path_factory.mktemp("idg")
    runs = {}
    for g in SUCCESS_GAMMAS + FAILURE_GAMMAS:
        cfg = base.with_overrides(gamma=g, output_dir=str(out / f"g{g:g}"))
        try:
            runs[g] = cli.cmd_idg(cfg)
        except cli.SolverFailure as exc:
            report = exc.report.to_dict() if exc.report is not None else None
            runs[g] = {"final_distance": math.inf, "report": report, "error": str(exc)}
    return runs


def test_1_riccati_equivalence(acceptance_log):
    res = checks.riccati_equivalence(count=20, seed=0, tol=1e-8)
    ok = res.status == "pass" and res.seconds < 1.0
    detail = f"max gain error {res.max_error:.2e} (tol 1e-8) on {res.instances} instances, {res.seconds:.2f} s (limit 1 s)"
    assert record(acceptance_log, 1, "riccati-equivalence", ok, detail)


def test_2_game_oracle_equivalence(acceptance_log):
    res = checks.game_equivalence(count=20, seed=1, tol=1e-8)
    ok = res.status == "pass" and res.seconds < 5.0
    detail = f"max error {res.max_error:.2e} (tol 1e-8) on {res.instances} instances, {res.seconds:.2f} s (limit 5 s)"
    assert record(acceptance_log, 2, "game-oracle-equivalence", ok, detail)


def test_3_gamma_limit(acceptance_log):
    res = checks.gamma_limit(gamma=1e8, tol=1e-6)
    ok = res.status == "pass"
    detail = f"max(|G_u diff|, |adversary gains|) {res.max_error:.2e} (tol 1e-6) at gamma=1e8"
    assert record(acceptance_log, 3, "gamma-limit-collapse", ok, detail)


@pytest.mark.slow
def test_4_mecanum_goal_reaching(acceptance_log, nominal_run):
    d, iters, secs = nominal_run["final_distance"], nominal_run["report"]["iterations"], nominal_run["seconds"]
    cfg = nominal_run["config"]
    settings = cfg["solver"]["horizon"] == 150 and cfg["solver"]["c"] == 0.5 and cfg["cost"]["alpha_ctrl"] == 1e-4
    settings = settings and cfg["cost"]["w_x"] == [1.0, 1.0, 0.8]
    ok = settings and d < 0.1 and iters <= 15 and secs < 60
    detail = f"final distance {d:.4f} m (need < 0.1) after {iters} iterations (limit 15), {secs:.1f} s (limit 60 s)"
    assert record(acceptance_log, 4, "mecanum-goal-reaching", ok, detail)


@pytest.mark.slow
def test_5_idg_robustness_band(acceptance_log, band_runs):
    dist = {g: band_runs[g]["final_distance"] for g in band_runs}
    reach = all(dist[g] < 0.1 for g in SUCCESS_GAMMAS)
    miss = all(not dist[g] < 0.1 for g in FAILURE_GAMMAS)
    detail = ", ".join(f"gamma={g:g}: {dist[g]:.3g} m" for g in SUCCESS_GAMMAS + FAILURE_GAMMAS)
    assert record(acceptance_log, 5, "idg-robustness-band", reach and miss, detail)


def test_6_tradeoff_curve_shape(acceptance_log, configs_dir, tmp_path):
    cfg = load_config(configs_dir / "lti_sweep.yaml")
    grid = [float(g) for g in np.logspace(-2, 2, 9)]
    cfg = cfg.with_overrides(gamma_grid=grid, output_dir=str(tmp_path))
    summary = cli.cmd_sweep(cfg)
    values = np.array([p["adversary_cost"] for p in summary["curve"]["points"]])
    rises = float(np.max(np.diff(values)))
    monotone = rises <= 1e-6

    # the same sweep against the exact LQR law, checked point by point
    inst = checks.lti_testbed()
    K, _ = oracle.lqr_riccati(inst.spec)
    x0 = np.asarray(cfg.experiment.x0, dtype=float)
    xs, us = [x0], []
    for t in range(inst.spec.T):
        us.append(K[t] @ xs[-1])
        xs.append(inst.spec.A @ xs[-1] + inst.spec.B @ us[-1])
    us = np.array(us)
    policy = rb.FrozenPolicy(np.array(xs), us, np.zeros_like(us), K)
    opts = SolverOptions(chi=1e-12, expected_reduction_in="sigma", rho0=1e-3, max_iters=50)
    curve = rb.sweep(inst.model, policy, inst.cost, grid, x0, opts, restarts=1)
    gap = max(abs(p.adversary_cost - x0 @ oracle.closed_loop_adversary(replace(inst.spec, gamma=p.gamma), K)[1][0] @ x0) for p in curve.points)
    ok = monotone and gap <= 1e-6 and float(np.max(np.diff(curve.values))) <= 1e-6
    detail = f"largest increase of J* between adjacent gammas {rises:.2e} (tol 1e-6); oracle gap {gap:.2e} (tol 1e-6)"
    assert record(acceptance_log, 6, "tradeoff-curve-shape", ok, detail)


def test_7_regularization_schedule(acceptance_log):
    up = update_rho(RegState(rho=1.0, rho0=1.0), "increase")
    down = update_rho(RegState(rho=1.0, rho0=1.0), "reduce")
    ok = (up.rho, up.rho0, down.rho, down.rho0) == (1.1, 1.1, 0.09, 0.09)
    detail = f"increase 1.0 -> {up.rho!r} (rho0 {up.rho0!r}), reduce 1.0 -> {down.rho!r} (rho0 {down.rho0!r})"
    assert record(acceptance_log, 7, "regularization-schedule", ok, detail)


def _derivative_errors(rng, points=100):
    """Worst relative finite-difference error of every model and cost."""
    errors = {}

    def sample(m, p):
        x = np.concatenate([rng.uniform(-3, 3, 3), rng.uniform(-1, 1, 3)])
        return x, rng.uniform(-0.6, 0.6, m), rng.uniform(-0.6, 0.6, p)

    testbed = checks.lti_testbed()
    models = {
        "mecanum-wheels": MecanumPlatform(control="wheels"),
        "mecanum-generalized": MecanumPlatform(control="generalized"),
        "lti-testbed": testbed.model,
    }
    for name, model in models.items():
        worst = 0.0
        for _ in range(points):
            if model.n == 6:
                x, u, v = sample(model.m, model.p)
            else:
                x, u, v = rng.normal(size=model.n), rng.normal(size=model.m), rng.normal(size=model.p)
            lin = model.linearize(x, u, v)
            worst = max(
                worst,
                rel_err(lin.f_x, central_jac(lambda z: model.step(z, u, v), x)),
                rel_err(lin.f_u, central_jac(lambda z: model.step(x, z, v), u)),
                rel_err(lin.f_v, central_jac(lambda z: model.step(x, u, z), v)),
            )
        errors[name] = worst

    costs = {
        "goal-nominal": (GoalCost(CostParams(x_star=GOAL)), 4, 4),
        "goal-cosh": (GoalCost(CostParams(x_star=GOAL, gamma=2.0), "cosh"), 4, 4),
        "goal-quadratic": (GoalCost(CostParams(x_star=GOAL, w_u=(1, 1, 1), w_v=(1, 1, 1), gamma=2.0), "quadratic"), 3, 3),
        "quadratic-game": (QuadraticCost(QuadraticGameParams(w_x=1.0, w_u=0.1, gamma=3.0, w_terminal=10.0)), 2, 2),
    }
    for name, (cost, m, p) in costs.items():
        worst = 0.0
        for _ in range(points):
            x, u, v = sample(m, p)
            n = len(x)
            z = np.concatenate([x, u, v])

            def scalar(z):
                return cost.stage(z[:n], z[n : n + m], z[n + m :])

            def grad(z):
                q = cost.stage_quadratic(z[:n], z[n : n + m], z[n + m :])
                return np.concatenate([q.l_x, q.l_u, q.l_v])

            q = cost.stage_quadratic(x, u, v)
            H = np.block([[q.l_xx, q.l_ux.T, q.l_vx.T], [q.l_ux, q.l_uu, q.l_uv], [q.l_vx, q.l_uv.T, q.l_vv]])
            _, L_x, L_xx = cost.terminal_quadratic(x)
            worst = max(
                worst,
                rel_err(grad(z), central_grad(scalar, z)),
                rel_err(H, central_jac(grad, z)),
                rel_err(L_x, central_grad(cost.terminal, x)),
                rel_err(L_xx, central_jac(lambda w: cost.terminal_quadratic(w)[1], x)),
            )
        errors[name] = worst
    return errors


def _acceptance_violations(reports, c=0.5):
    steps, bad = 0, 0
    for rep in reports:
        for acc, eta in zip(rep["accepted"], rep["eta_trace"]):
            if acc:
                steps += 1
                bad += not eta > c
    return steps, bad


@pytest.mark.slow
def test_8_derivative_hygiene(acceptance_log, nominal_run, band_runs):
    errors = _derivative_errors(np.random.default_rng(8))
    worst_name = max(errors, key=errors.get)
    fd_ok = errors[worst_name] < 1e-4

    reports = [nominal_run["report"]] + [r["report"] for r in band_runs.values() if r.get("report")]
    inst = checks.lti_testbed(gamma=0.5)
    x0 = np.array([1.0, -0.5, 0.3, 0.2])
    opts = SolverOptions(expected_reduction_in="sigma", rho0=1e-3)
    try:
        reports.append(idg.idg_solve(inst.model, inst.cost, x0, np.zeros((inst.spec.T, 2)), options=opts)[2].to_dict())
    except NoProgress as exc:
        reports.append(exc.result[2].to_dict())
    steps, bad = _acceptance_violations(reports)
    ok = fd_ok and bad == 0 and steps > 0
    detail = (
        f"worst FD error {errors[worst_name]:.2e} ({worst_name}, tol 1e-4) over {len(errors)} models/costs x 100 points; "
        f"{steps} accepted steps in {len(reports)} runs, {bad} with eta <= 0.5"
    )
    assert record(acceptance_log, 8, "derivative-hygiene", ok, detail)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))

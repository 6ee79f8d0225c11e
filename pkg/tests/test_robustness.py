from dataclasses import replace

import numpy as np
import pytest

from fdcheck import central_grad, central_jac, forward_jac, rel_err
from robust_idg import checks, ilqg, oracle
from robust_idg import robustness as rb
from robust_idg.costs import CostParams, GoalCost
from robust_idg.dynamics import MecanumPlatform
from robust_idg.exceptions import HorizonMismatch
from robust_idg.trajectory import SolverOptions, rollout

X0 = np.array([1.0, -0.5, 0.0, 0.0])
OPTS = SolverOptions(chi=1e-12, expected_reduction_in="sigma", rho0=1e-3, max_iters=50)
GOAL = (2.0, 1.5, 0.0)


@pytest.fixture(scope="module")
def testbed():
    """LTI testbed with the exact LQR law frozen as the policy."""
    inst = checks.lti_testbed()
    K, _ = oracle.lqr_riccati(inst.spec)
    T = inst.spec.T
    xs, us = [X0], []
    for t in range(T):
        us.append(K[t] @ xs[-1])
        xs.append(inst.spec.A @ xs[-1] + inst.spec.B @ us[-1])
    us = np.array(us)
    return inst, K, rb.FrozenPolicy(np.array(xs), us, np.zeros_like(us), K)


@pytest.fixture(scope="module")
def mecanum():
    model = MecanumPlatform(control="generalized")
    cost = GoalCost(CostParams(x_star=GOAL, w_u=(1, 1, 1), w_v=(1, 1, 1), alpha_ctrl=1e-4), "quadratic")
    T = 40
    us0 = model.constant_force_controls(T)
    opts = SolverOptions(max_iters=5, rho0=10.0, rho_min=1.0, expected_reduction_in="sigma")
    traj, gains, _ = ilqg.solve(model, cost.nominal, np.zeros(6), us0, opts)
    return model, cost, traj, rb.FrozenPolicy.from_solve(traj, gains)


class TestFrozenPolicy:
    def test_horizon_mismatch(self):
        with pytest.raises(HorizonMismatch):
            rb.FrozenPolicy(np.zeros((3, 2)), np.zeros((5, 1)), np.zeros((5, 1)), np.zeros((5, 1, 2)))
        with pytest.raises(HorizonMismatch):
            rb.FrozenPolicy(np.zeros((6, 2)), np.zeros((5, 1)), np.zeros((4, 1)), np.zeros((5, 1, 2)))

    def test_non_finite(self):
        K = np.zeros((5, 1, 2))
        K[2, 0, 1] = np.nan
        with pytest.raises(ValueError):
            rb.FrozenPolicy(np.zeros((6, 2)), np.zeros((5, 1)), np.zeros((5, 1)), K)

    def test_short_policy_rejected_by_closed_loop(self, testbed):
        inst, _, pol = testbed
        with pytest.raises(HorizonMismatch):
            rb.close_loop(inst.model, pol, horizon=pol.horizon + 1)
        closed = rb.close_loop(inst.model, pol)
        with pytest.raises(HorizonMismatch):
            closed.step(X0, np.zeros(2), None, t=pol.horizon)


class TestCloseLoop:
    def test_zero_disturbance_replays_lti(self, testbed):
        inst, _, pol = testbed
        closed = rb.close_loop(inst.model, pol)
        traj = rollout(closed, rb.AdversaryObjective(inst.cost, pol, 1.0), X0, np.zeros((pol.horizon, 2)))
        assert np.max(np.abs(traj.xs - pol.xs)) <= 1e-9

    def test_zero_disturbance_replays_mecanum(self, mecanum):
        model, cost, traj, pol = mecanum
        closed = rb.close_loop(model, pol)
        replay = rollout(closed, rb.AdversaryObjective(cost, pol, 1.0), np.zeros(6), np.zeros((pol.horizon, 3)))
        assert np.max(np.abs(replay.xs - traj.xs)) <= 1e-9
        assert replay.cost == pytest.approx(-traj.cost, rel=1e-12)

    def test_open_loop_playback(self, mecanum):
        model, _, traj, pol = mecanum
        open_loop = rb.FrozenPolicy(pol.xs, pol.us, np.zeros_like(pol.us), np.zeros_like(pol.K))
        closed = rb.close_loop(model, open_loop)
        rng = np.random.default_rng(0)
        x = rng.normal(size=6)
        for t in (0, 7, 39):
            v = rng.normal(size=3)
            np.testing.assert_array_equal(closed.step(x, v, None, t), model.step(x, pol.us[t], v, t))

    def test_lti_jacobian(self, testbed):
        inst, K, pol = testbed
        closed = rb.close_loop(inst.model, pol)
        rng = np.random.default_rng(1)
        for t in (0, 11, 29):
            x, v = rng.normal(size=4), rng.normal(size=2)
            lin = closed.linearize(x, v, None, t)
            fd = forward_jac(lambda z: closed.step(z, v, None, t), x)
            assert np.max(np.abs(lin.f_x - fd)) < 1e-6
            assert np.max(np.abs(lin.f_x - (inst.spec.A + inst.spec.B @ K[t]))) < 1e-12
            np.testing.assert_allclose(lin.f_u, inst.spec.D)

    def test_mecanum_jacobian(self, mecanum):
        model, _, _, pol = mecanum
        closed = rb.close_loop(model, pol)
        rng = np.random.default_rng(2)
        for t in rng.integers(0, pol.horizon, 10):
            x = pol.xs[t] + 0.1 * rng.normal(size=6)
            v = 0.2 * rng.normal(size=3)
            lin = closed.linearize(x, v, None, int(t))
            assert rel_err(lin.f_x, central_jac(lambda z: closed.step(z, v, None, int(t)), x)) < 1e-5
            assert rel_err(lin.f_u, central_jac(lambda w: closed.step(x, w, None, int(t)), v)) < 1e-5


class TestAdversaryObjective:
    def test_requires_positive_gamma(self, testbed):
        inst, _, pol = testbed
        with pytest.raises(ValueError):
            rb.AdversaryObjective(inst.cost, pol, 0.0)

    def test_negates_nominal_cost(self, testbed):
        inst, _, pol = testbed
        obj = rb.AdversaryObjective(inst.cost, pol, 2.0)
        x, v = np.array([0.3, 0.1, -0.2, 0.4]), np.array([0.5, -1.0])
        u = pol.control(x, 3)
        expected = -inst.cost.nominal.stage(x, u, np.zeros(0)) + 2.0 * (v @ v)
        assert obj.stage(x, v, None, 3) == pytest.approx(expected, rel=1e-14)
        assert obj.terminal(x) == -inst.cost.terminal(x)

    def test_derivatives(self, mecanum):
        _, cost, _, pol = mecanum
        obj = rb.AdversaryObjective(cost, pol, 3.0)
        rng = np.random.default_rng(3)
        for _ in range(100):
            t = int(rng.integers(0, pol.horizon))
            x, v = pol.xs[t] + 0.3 * rng.normal(size=6), 0.5 * rng.normal(size=3)
            z = np.concatenate([x, v])

            def scalar(z):
                return obj.stage(z[:6], z[6:], None, t)

            def grad(z):
                q = obj.stage_quadratic(z[:6], z[6:], None, t)
                return np.concatenate([q.l_x, q.l_u])

            q = obj.stage_quadratic(x, v, None, t)
            assert q.l == pytest.approx(scalar(z), rel=1e-12)
            assert rel_err(grad(z), central_grad(scalar, z)) < 1e-4
            H = np.block([[q.l_xx, q.l_ux.T], [q.l_ux, q.l_uu]])
            assert rel_err(H, central_jac(grad, z)) < 1e-4
            _, L_x, L_xx = obj.terminal_quadratic(x)
            assert rel_err(L_x, central_grad(obj.terminal, x)) < 1e-4


class TestOptimizeAdversary:
    def test_matches_closed_loop_oracle(self, testbed):
        inst, K, pol = testbed
        closed = rb.close_loop(inst.model, pol)
        for g in (0.05, 0.5, 10.0):
            _, P = oracle.closed_loop_adversary(replace(inst.spec, gamma=g), K)
            res = rb.optimize_adversary(closed, inst.cost, g, X0, OPTS, restarts=1)
            assert abs(res.value - X0 @ P[0] @ X0) <= 1e-6

    def test_large_gamma_does_nothing(self, testbed, mecanum):
        inst, _, pol = testbed
        nominal = rollout(inst.model, inst.cost.nominal, X0, pol.us).cost
        res = rb.optimize_adversary(rb.close_loop(inst.model, pol), inst.cost, 1e8, X0, OPTS, restarts=1)
        assert np.max(np.linalg.norm(res.vs, axis=1)) <= 1e-4
        assert abs(res.value - nominal) <= 1e-3

        model, cost, traj, mpol = mecanum
        res = rb.optimize_adversary(rb.close_loop(model, mpol), cost, 1e8, np.zeros(6), OPTS, restarts=1)
        assert np.max(np.linalg.norm(res.vs, axis=1)) <= 1e-4
        assert abs(res.value - traj.cost) <= 1e-3

    def test_value_is_attained(self, testbed):
        # the reported value is the objective of the returned disturbance, so
        # it lower-bounds the true worst case
        inst, K, pol = testbed
        closed = rb.close_loop(inst.model, pol)
        res = rb.optimize_adversary(closed, inst.cost, 0.5, X0, OPTS, restarts=3, seed=4)
        replay = rollout(closed, rb.AdversaryObjective(inst.cost, pol, 0.5), X0, res.vs)
        assert res.value == pytest.approx(-replay.cost, rel=1e-12)
        _, P = oracle.closed_loop_adversary(replace(inst.spec, gamma=0.5), K)
        assert res.value <= X0 @ P[0] @ X0 + 1e-9

    def test_cheap_disturbance_degrades_more(self, testbed):
        inst, _, pol = testbed
        metric = rb.terminal_distance(dims=None)
        closed = rb.close_loop(inst.model, pol)
        small = rb.optimize_adversary(closed, inst.cost, 1e-3, X0, OPTS, restarts=1)
        large = rb.optimize_adversary(closed, inst.cost, 10.0, X0, OPTS, restarts=1)
        assert metric(small.xs) > metric(large.xs)

    def test_requires_positive_gamma(self, testbed):
        inst, _, pol = testbed
        with pytest.raises(ValueError):
            rb.optimize_adversary(rb.close_loop(inst.model, pol), inst.cost, -1.0, X0)


GRID = np.logspace(-2, 2, 9)


@pytest.fixture(scope="module")
def curve(testbed):
    inst, _, pol = testbed
    return rb.sweep(inst.model, pol, inst.cost, GRID, X0, OPTS, restarts=1, metric=rb.terminal_distance(dims=None))


class TestSweep:

    def test_matches_oracle_everywhere(self, testbed, curve):
        inst, K, _ = testbed
        for p in curve.points:
            _, P = oracle.closed_loop_adversary(replace(inst.spec, gamma=p.gamma), K)
            assert abs(p.adversary_cost - X0 @ P[0] @ X0) <= 1e-6

    def test_nonincreasing(self, curve):
        assert np.all(np.diff(curve.values) <= 1e-6)
        assert np.all(np.diff(curve.gammas) > 0)

    def test_large_gamma_degradation(self, testbed):
        inst, _, pol = testbed
        curve = rb.sweep(inst.model, pol, inst.cost, [1e8], X0, OPTS, restarts=1)
        assert len(curve.points) == 1
        d = curve.points[0].degradation
        assert abs(d - curve.undisturbed_degradation) < 1e-3 * curve.undisturbed_degradation

    def test_permutation_invariance(self, testbed, curve):
        inst, _, pol = testbed
        shuffled = np.random.default_rng(5).permutation(GRID)
        other = rb.sweep(inst.model, pol, inst.cost, shuffled, X0, OPTS, restarts=1, metric=rb.terminal_distance(dims=None))
        assert other.rows() == curve.rows()

    def test_seeds_depend_on_value_not_position(self, testbed):
        inst, _, pol = testbed
        a = rb.sweep(inst.model, pol, inst.cost, [0.1, 1.0], X0, OPTS, restarts=3, seed=9)
        b = rb.sweep(inst.model, pol, inst.cost, [1.0, 0.1, 5.0], X0, OPTS, restarts=3, seed=9)
        assert a.rows() == [r for r in b.rows() if r[0] in (0.1, 1.0)]

    def test_parallel_matches_serial(self, testbed):
        inst, _, pol = testbed
        grid = [0.05, 0.5, 5.0]
        serial = rb.sweep(inst.model, pol, inst.cost, grid, X0, OPTS, restarts=2)
        parallel = rb.sweep(inst.model, pol, inst.cost, grid, X0, OPTS, restarts=2, workers=2)
        assert serial.rows() == parallel.rows()

    @pytest.mark.parametrize("grid", [[], [0.0, 1.0], [-1.0], [1.0, 1.0]])
    def test_invalid_grid(self, testbed, grid):
        inst, _, pol = testbed
        with pytest.raises(ValueError):
            rb.sweep(inst.model, pol, inst.cost, grid, X0)

    def test_failures_are_annotated(self, testbed):
        inst, _, pol = testbed
        opts = replace(OPTS, max_iters=3)
        curve = rb.sweep(inst.model, pol, inst.cost, [1e-6, 1.0], X0, opts, restarts=1)
        assert len(curve.points) == 2
        assert curve.points[0].annotation is not None
        assert curve.points[1].degradation < curve.points[0].degradation

    def test_gamma_star(self, testbed):
        inst, _, pol = testbed
        curve = rb.sweep(inst.model, pol, inst.cost, [1e-3, 1e-2, 10.0], X0, OPTS, restarts=1, threshold=1.0, metric=rb.terminal_distance(dims=None))
        assert curve.points[0].degradation > 1.0 >= curve.points[1].degradation
        assert curve.gamma_star == 1e-3
        lenient = rb.sweep(inst.model, pol, inst.cost, [1.0, 10.0], X0, OPTS, restarts=1, threshold=1e3)
        assert lenient.gamma_star is None

    def test_to_dict(self, curve):
        d = curve.to_dict()
        assert [p["gamma"] for p in d["points"]] == list(curve.gammas)
        assert d["threshold"] == curve.threshold


def test_gamma_seed_distinct():
    a, b = rb.gamma_seed(0, 1.0), rb.gamma_seed(0, 2.0)
    assert a.generate_state(2).tolist() != b.generate_state(2).tolist()
    assert rb.gamma_seed(0, 1.0).generate_state(2).tolist() == a.generate_state(2).tolist()


@pytest.mark.slow
def test_mecanum_critical_gamma(configs_dir, tmp_path):
    from robust_idg import cli
    from robust_idg.config import load_config

    cfg = load_config(configs_dir / "mecanum_idg.yaml").with_overrides(output_dir=str(tmp_path))
    summary = cli.cmd_sweep(cfg)
    curve = summary["curve"]
    assert summary["nominal_final_distance"] < 0.1
    assert len(curve["points"]) == 9
    assert 1e-3 <= curve["gamma_star"] <= 0.1
    by_gamma = {p["gamma"]: p for p in curve["points"]}
    assert all(by_gamma[g]["degradation"] < 0.1 for g in (10.0, 5.0, 3.0, 1.5))

import math

import numpy as np
import pytest

from interplan import behavior as bh
from interplan.actions import LateralManeuver, LongitudinalStyle, SemanticAction
from interplan.config import with_overrides
from interplan.errors import SeedInCollision, TOutOfRange
from interplan.semantic_map import StaticObstacle, straight_lane
from interplan.trajectory import (BehaviorFeedback, PiecewiseTrajectory,
                                  QpProblem, SpatioTemporalCube, build_corridor,
                                  formulate_qp, plan_trajectory, solve_qp,
                                  validate)
from interplan.trajectory.bezier import (BezierSegment, N_CTRL, bernstein_row,
                                         endpoint_rows, jerk_gram, DEGREE)
from interplan.trajectory.corridor import decision_frenet_refs
from interplan.trajectory.planner import StartState

from conftest import make_snapshot, vehicle

KEEP, LEFT = LateralManeuver.KEEP, LateralManeuver.LEFT
MOD = LongitudinalStyle.MODERATE


def bezier_to_monomial(ctrl: np.ndarray, duration: float) -> np.ndarray:
    """Exact monomial coefficients (in t) of a degree-5 Bezier segment."""
    T = np.zeros((6, 6))
    for i in range(6):
        for k in range(i, 6):
            T[k, i] = (math.comb(5, i) * math.comb(5 - i, k - i) * (-1) ** (k - i))
    coeff_u = T @ ctrl
    return coeff_u / duration ** np.arange(6)


def min_jerk_quintic(x0, v0, a0, x1, v1, a1, T) -> np.ndarray:
    """Analytic minimum-jerk polynomial through the boundary conditions."""
    M = np.zeros((6, 6))
    M[0, 0] = 1.0
    M[1, 1] = 1.0
    M[2, 2] = 2.0
    for k in range(6):
        M[3, k] = T**k
        M[4, k] = k * T ** (k - 1) if k >= 1 else 0.0
        M[5, k] = k * (k - 1) * T ** (k - 2) if k >= 2 else 0.0
    return np.linalg.solve(M, np.array([x0, v0, a0, x1, v1, a1]))


class TestSampling:
    def test_constant_curve(self):
        seg = BezierSegment(0.0, 2.0, np.full(6, 3.0), np.full(6, -1.0))
        traj = PiecewiseTrajectory((seg,))
        for t in (0.0, 0.7, 2.0):
            s = traj.sample(t)
            assert s["s"][0] == pytest.approx(3.0)
            assert s["d"][0] == pytest.approx(-1.0)
            assert all(abs(v) < 1e-12 for v in s["s"][1:])

    def test_linear_curve_constant_velocity(self):
        ctrl = np.linspace(2.0, 12.0, 6)
        seg = BezierSegment(0.0, 2.0, ctrl, np.zeros(6))
        traj = PiecewiseTrajectory((seg,))
        for t in (0.0, 0.5, 1.3, 2.0):
            s = traj.sample(t)["s"]
            assert s[1] == pytest.approx((12.0 - 2.0) / 2.0, abs=1e-9)
            assert s[2] == pytest.approx(0.0, abs=1e-9)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(3)
        seg = BezierSegment(0.0, 1.7, rng.normal(size=6) * 5, rng.normal(size=6))
        traj = PiecewiseTrajectory((seg,))
        h = 1e-5
        for t in np.linspace(2 * h, 1.7 - 2 * h, 9):
            for axis in ("s", "d"):
                f = lambda tt: traj.sample(float(tt))[axis][0]
                num_v = (f(t + h) - f(t - h)) / (2 * h)
                num_a = (f(t + h) - 2 * f(t) + f(t - h)) / h**2
                got = traj.sample(float(t))[axis]
                assert got[1] == pytest.approx(num_v, abs=1e-5)
                assert got[2] == pytest.approx(num_a, abs=1e-4)

    def test_t_out_of_range(self):
        seg = BezierSegment(0.0, 1.0, np.zeros(6), np.zeros(6))
        with pytest.raises(TOutOfRange):
            PiecewiseTrajectory((seg,)).sample(1.5)


class TestSolveQp:
    def test_unconstrained_matches_linear_solve(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(6, 6))
        Q = m @ m.T + np.eye(6)
        c = rng.normal(size=6)
        sol = solve_qp(QpProblem(Q=Q, c=c))
        np.testing.assert_allclose(sol.x, np.linalg.solve(Q, -c), atol=1e-9)

    def test_active_box_constraint(self):
        # min x^2 subject to x >= 1
        qp = QpProblem(Q=np.array([[2.0]]), c=np.zeros(1),
                       G=np.array([[-1.0]]), h=np.array([-1.0]))
        sol = solve_qp(qp)
        assert sol.ok
        assert sol.x[0] == pytest.approx(1.0, abs=1e-8)
        assert sol.stationarity < 1e-6
        assert sol.comp_slackness < 1e-6

    def test_infeasible_detected(self):
        # x >= 1 and x <= 0
        qp = QpProblem(Q=np.array([[2.0]]), c=np.zeros(1),
                       G=np.array([[-1.0], [1.0]]), h=np.array([-1.0, 0.0]))
        assert solve_qp(qp).status == "infeasible"

    def test_random_qps_against_projected_gradient(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            n = int(rng.integers(2, 12))
            eigs = rng.uniform(0.5, 5.0, size=n)
            basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
            Q = basis @ np.diag(eigs) @ basis.T
            Q = 0.5 * (Q + Q.T)
            c = rng.normal(size=n)
            lo = rng.uniform(-2.0, -0.5, size=n)
            hi = rng.uniform(0.5, 2.0, size=n)
            qp = QpProblem(Q=Q, c=c,
                           G=np.vstack([np.eye(n), -np.eye(n)]),
                           h=np.concatenate([hi, -lo]))
            sol = solve_qp(qp)
            assert sol.ok
            x_pg = projected_gradient(Q, c, lo, hi)
            f_pg = 0.5 * x_pg @ Q @ x_pg + c @ x_pg
            assert sol.objective <= f_pg + 1e-5
            assert abs(sol.objective - f_pg) < 1e-5


def projected_gradient(Q, c, lo, hi, iters=4000):
    """Independent first-order oracle: accelerated projected gradient."""
    L = float(np.linalg.eigvalsh(Q).max())
    x = np.clip(np.zeros_like(c), lo, hi)
    y = x.copy()
    t = 1.0
    for _ in range(iters):
        x_new = np.clip(y - (Q @ y + c) / L, lo, hi)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t - 1.0) / t_new * (x_new - x)
        x, t = x_new, t_new
    return x


class TestFormulation:
    def test_minimum_jerk_equivalence(self):
        # endpoint-pinned single segment with zero similarity weight
        T = 2.5
        x0, v0, a0 = 1.0, 2.0, -0.5
        x1, v1, a1 = 14.0, 1.0, 0.3
        Q = 2.0 * jerk_gram(T)
        rows = np.vstack([endpoint_rows(T, at_end=False), endpoint_rows(T, at_end=True)])
        b = np.array([x0, v0, a0, x1, v1, a1])
        sol = solve_qp(QpProblem(Q=Q, c=np.zeros(N_CTRL), A=rows, b=b))
        assert sol.ok
        got = bezier_to_monomial(sol.x, T)
        expected = min_jerk_quintic(x0, v0, a0, x1, v1, a1, T)
        np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_pure_similarity_matches_least_squares(self):
        rng = np.random.default_rng(7)
        T = 2.0
        ts = np.linspace(0.0, T, 9)
        refs = rng.normal(size=9) * 3.0
        B = np.stack([bernstein_row(DEGREE, t / T) for t in ts])
        n = len(ts)
        qp = QpProblem(Q=2.0 / n * B.T @ B, c=-2.0 / n * B.T @ refs)
        sol = solve_qp(qp)
        expected, *_ = np.linalg.lstsq(B, refs, rcond=None)
        np.testing.assert_allclose(sol.x, expected, atol=1e-6)
        residual = B @ sol.x - refs
        expected_res = B @ expected - refs
        assert np.linalg.norm(residual) == pytest.approx(
            np.linalg.norm(expected_res), abs=1e-9)

    def test_gradient_matches_finite_differences(self, cfg):
        corridor = [
            SpatioTemporalCube(0.0, 30.0, -3.0, 3.0, 0.0, 1.0),
            SpatioTemporalCube(5.0, 40.0, -3.0, 3.0, 1.0, 2.0),
        ]
        times = np.linspace(0.0, 2.0, 11)
        values = 10.0 * times + 0.3 * times**2
        qp = formulate_qp(corridor, times, values, (0.0, 10.0, 0.6), "s", cfg)
        assert np.allclose(qp.Q, qp.Q.T, atol=1e-12)
        assert np.linalg.eigvalsh(qp.Q).min() > -1e-9
        rng = np.random.default_rng(1)
        x = rng.normal(size=qp.n)
        grad = qp.gradient(x)
        h = 1e-6
        for idx in rng.choice(qp.n, size=6, replace=False):
            e = np.zeros(qp.n)
            e[idx] = h
            num = (qp.objective(x + e) - qp.objective(x - e)) / (2 * h)
            denom = max(1.0, abs(num))
            assert abs(grad[idx] - num) / denom < 1e-5


def _keep_lane_decision(cfg, speed=None, agents=None, statics=()):
    speed = cfg.planner.preferred_speed if speed is None else speed
    world = {0: vehicle(50, 0, speed=speed)}
    if agents:
        world.update(agents)
    left = straight_lane(0, 3.5, 800.0, 3.5, right_neighbor=1, change_right_allowed=True)
    right = straight_lane(1, 0.0, 800.0, 3.5, left_neighbor=0, change_left_allowed=True)
    snap = make_snapshot([left, right], world, statics)
    result = bh.plan(snap, cfg)
    return snap, result.decision


class TestCorridor:
    def test_unconstrained_inflation_reaches_caps(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        lane = snap.lane(decision.target_lane)
        corridor = build_corridor(decision, snap, lane, cfg)
        road_hi = 3.5 / 2.0  # ego keeps the right lane: d up to own lane edge
        for cube in corridor:
            # lateral growth spans the whole road (both lanes)
            assert cube.d_hi == pytest.approx(3.5 + 1.75 - 3.5, abs=1e-6) or cube.d_hi > 1.7
            assert cube.d_lo < -1.6
            assert cube.s_hi - cube.s_lo > 2 * cfg.trajectory.max_s_half * 0.9

    def test_obstacle_blocks_growth(self, cfg):
        statics = [StaticObstacle(1, 150.0, 154.6, -0.95, 0.95)]
        snap, decision = _keep_lane_decision(cfg, speed=8.0, statics=statics)
        lane = snap.lane(decision.target_lane)
        corridor = build_corridor(decision, snap, lane, cfg)
        pad = snap.agents[0].length / 2.0 + cfg.trajectory.agent_margin
        for cube in corridor:
            assert cube.s_hi <= 150.0 - pad + 1e-6

    def test_seed_in_collision(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        bad = make_snapshot(snap.lanes, dict(snap.agents),
                            [StaticObstacle(1, 45.0, 120.0, -1.5, 1.5)])
        lane = bad.lane(decision.target_lane)
        with pytest.raises(SeedInCollision):
            build_corridor(decision, bad, lane, cfg)

    def test_cubes_partition_and_overlap(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        lane = snap.lane(decision.target_lane)
        corridor = build_corridor(decision, snap, lane, cfg)
        assert corridor[0].t_lo == pytest.approx(decision.t0)
        assert corridor[-1].t_hi == pytest.approx(decision.t0 + 5.0)
        for a, b in zip(corridor, corridor[1:]):
            assert a.t_hi == pytest.approx(b.t_lo)
            assert min(a.s_hi, b.s_hi) > max(a.s_lo, b.s_lo)
            assert min(a.d_hi, b.d_hi) > max(a.d_lo, b.d_lo)


class TestPlanTrajectory:
    def test_keep_lane_tracks_decision(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        traj = plan_trajectory(decision, snap, cfg)
        assert isinstance(traj, PiecewiseTrajectory)
        lane = snap.lane(decision.target_lane)
        times, s_refs, d_refs = decision_frenet_refs(decision, lane)
        errs = []
        for t, s_ref, d_ref in zip(times, s_refs, d_refs):
            sample = traj.sample(float(t))
            errs.append(math.hypot(sample["s"][0] - s_ref, sample["d"][0] - d_ref))
        rms = math.sqrt(float(np.mean(np.square(errs))))
        assert rms < 0.5

    def test_lane_change_reaches_target(self, cfg):
        left = straight_lane(0, 3.5, 800.0, 3.5, right_neighbor=1, change_right_allowed=True)
        right = straight_lane(1, 0.0, 800.0, 3.5, left_neighbor=0, change_left_allowed=True)
        snap = make_snapshot([left, right], {0: vehicle(50, 0, speed=10)})
        result = bh.plan(snap, cfg, user_command="left")
        assert result.decision.target_lane == 0
        traj = plan_trajectory(result.decision, snap, cfg)
        assert isinstance(traj, PiecewiseTrajectory)
        end = traj.sample(traj.t_end)
        assert abs(end["d"][0]) < 0.2  # d is relative to the target centerline

    def test_validation_clean_on_solver_output(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        lane = snap.lane(decision.target_lane)
        corridor = build_corridor(decision, snap, lane, cfg)
        traj = plan_trajectory(decision, snap, cfg)
        report = validate(traj, corridor)
        assert report.ok

    def test_validation_flags_bad_control_point(self, cfg):
        corridor = [SpatioTemporalCube(0.0, 10.0, -1.0, 1.0, 0.0, 1.0)]
        ctrl = np.array([0.0, 2.0, 4.0, 30.0, 8.0, 10.0])  # s leaves the cube
        traj = PiecewiseTrajectory((BezierSegment(0.0, 1.0, ctrl, np.zeros(6)),))
        report = validate(traj, corridor)
        assert report.containment_violations > 0

    def test_validation_flags_joint_mismatch(self, cfg):
        a = BezierSegment(0.0, 1.0, np.linspace(0, 10, 6), np.zeros(6))
        b = BezierSegment(1.0, 1.0, np.linspace(10, 14, 6), np.zeros(6))
        traj = PiecewiseTrajectory((a, b))
        corridor = [SpatioTemporalCube(-1, 40, -1, 1, 0.0, 1.0),
                    SpatioTemporalCube(-1, 40, -1, 1, 1.0, 2.0)]
        report = validate(traj, corridor)
        assert report.max_joint_mismatch > 1e-8  # velocity jump at the joint

    def test_blocked_seed_reports_feedback(self, cfg):
        snap, decision = _keep_lane_decision(cfg)
        bad = make_snapshot(snap.lanes, dict(snap.agents),
                            [StaticObstacle(1, 45.0, 120.0, -1.5, 1.5)])
        out = plan_trajectory(decision, bad, cfg)
        assert isinstance(out, BehaviorFeedback)
        assert out.reason == "seed_in_collision"

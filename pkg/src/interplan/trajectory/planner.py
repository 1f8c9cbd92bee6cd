"""Decision-to-trajectory optimization inside the corridor.

One QP per axis: jerk smoothness plus similarity to the decision states,
start-state equalities, C2 joint continuity, convex-hull containment per
cube and hodograph derivative bounds.  Infeasibility is reported back to
the caller instead of being patched over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..behavior import Decision
from ..config import Config
from ..errors import EmptyCorridor, SeedInCollision
from ..semantic_map import LaneGeometry, VehicleState, WorldSnapshot, to_frenet
from .bezier import (N_CTRL, BezierSegment, PiecewiseTrajectory, accel_rows,
                     bernstein_row, endpoint_rows, jerk_gram, velocity_rows,
                     DEGREE)
from .corridor import SpatioTemporalCube, build_corridor, decision_frenet_refs
from .qp import QpProblem, QpSolution, solve_qp


@dataclass
class StartState:
    """Per-axis (position, velocity, acceleration) at the plan origin."""

    s: tuple[float, float, float]
    d: tuple[float, float, float]

    def axis(self, name: str) -> tuple[float, float, float]:
        return self.s if name == "s" else self.d


def start_state_from_vehicle(state: VehicleState, lane: LaneGeometry) -> StartState:
    fs = to_frenet(lane, state)
    rel = math.atan2(fs.vd, fs.vs) if state.speed > 1e-9 else 0.0
    yaw_rate = state.speed * math.tan(state.steer) / state.wheelbase
    a_s = state.accel * math.cos(rel)
    a_d = state.accel * math.sin(rel) + state.speed * yaw_rate
    return StartState(s=(fs.s, fs.vs, a_s), d=(fs.d, fs.vd, a_d))


def _segment_refs(corridor: list[SpatioTemporalCube], times: np.ndarray,
                  values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Assign each reference state to the segment containing its timestamp
    (boundary states go to the earlier segment)."""
    refs: list[tuple[list, list]] = [([], []) for _ in corridor]
    for t, v in zip(times, values):
        for j, cube in enumerate(corridor):
            if (t > cube.t_lo + 1e-9 or j == 0) and t <= cube.t_hi + 1e-9:
                if t >= cube.t_lo - 1e-9:
                    refs[j][0].append(t)
                    refs[j][1].append(v)
                break
    return [(np.asarray(ts), np.asarray(vs)) for ts, vs in refs]


def formulate_qp(corridor: list[SpatioTemporalCube], times: np.ndarray,
                 values: np.ndarray, start: tuple[float, float, float],
                 axis: str, cfg: Config) -> QpProblem:
    """Assemble the per-axis QP over all segment control points."""
    if not corridor:
        raise EmptyCorridor("no cubes to optimize over")
    tp = cfg.trajectory
    w_s = tp.w_smooth_s if axis == "s" else tp.w_smooth_d
    w_f = tp.w_fit_s if axis == "s" else tp.w_fit_d
    n_seg = len(corridor)
    n = n_seg * N_CTRL
    Q = np.zeros((n, n))
    c = np.zeros(n)
    refs = _segment_refs(corridor, times, values)
    for j, cube in enumerate(corridor):
        sl = slice(j * N_CTRL, (j + 1) * N_CTRL)
        Q[sl, sl] += 2.0 * w_s * jerk_gram(cube.duration)
        ts, vs = refs[j]
        if len(ts):
            B = np.stack([bernstein_row(DEGREE, (t - cube.t_lo) / cube.duration)
                          for t in ts])
            Q[sl, sl] += 2.0 * w_f / len(ts) * (B.T @ B)
            c[sl] += -2.0 * w_f / len(ts) * (B.T @ vs)

    # equalities: start state then C2 continuity at each joint
    rows_a, rhs_a = [], []
    first = corridor[0]
    e0 = endpoint_rows(first.duration, at_end=False)
    for order in range(3):
        row = np.zeros(n)
        row[:N_CTRL] = e0[order]
        rows_a.append(row)
        rhs_a.append(start[order])
    for j in range(n_seg - 1):
        ea = endpoint_rows(corridor[j].duration, at_end=True)
        eb = endpoint_rows(corridor[j + 1].duration, at_end=False)
        for order in range(3):
            row = np.zeros(n)
            row[j * N_CTRL:(j + 1) * N_CTRL] = ea[order]
            row[(j + 1) * N_CTRL:(j + 2) * N_CTRL] -= eb[order]
            rows_a.append(row)
            rhs_a.append(0.0)

    # inequalities: hull containment and hodograph derivative bounds
    rows_g, rhs_g = [], []
    for j, cube in enumerate(corridor):
        sl = slice(j * N_CTRL, (j + 1) * N_CTRL)
        lo, hi = cube.bounds(axis)
        eye = np.eye(N_CTRL)
        for sign, bound in ((1.0, hi), (-1.0, -lo)):
            block = np.zeros((N_CTRL, n))
            block[:, sl] = sign * eye
            rows_g.append(block)
            rhs_g.append(np.full(N_CTRL, bound))
        v_lo, v_hi = cube.vel_bounds(axis)
        vr = velocity_rows(cube.duration)
        for sign, bound in ((1.0, v_hi), (-1.0, -v_lo)):
            block = np.zeros((vr.shape[0], n))
            block[:, sl] = sign * vr
            rows_g.append(block)
            rhs_g.append(np.full(vr.shape[0], bound))
        a_lo, a_hi = cube.acc_bounds(axis)
        ar = accel_rows(cube.duration)
        for sign, bound in ((1.0, a_hi), (-1.0, -a_lo)):
            block = np.zeros((ar.shape[0], n))
            block[:, sl] = sign * ar
            rows_g.append(block)
            rhs_g.append(np.full(ar.shape[0], bound))

    Q = 0.5 * (Q + Q.T)
    return QpProblem(Q=Q, c=c,
                     A=np.vstack(rows_a), b=np.asarray(rhs_a),
                     G=np.vstack(rows_g), h=np.concatenate(rhs_g))


@dataclass
class ValidationReport:
    containment_violations: int = 0
    velocity_violations: int = 0
    accel_violations: int = 0
    max_joint_mismatch: float = 0.0
    samples: int = 0

    @property
    def ok(self) -> bool:
        return (self.containment_violations == 0 and self.velocity_violations == 0
                and self.accel_violations == 0 and self.max_joint_mismatch < 1e-8)


def validate(traj: PiecewiseTrajectory, corridor: list[SpatioTemporalCube],
             n_samples: int = 1000, tol: float = 1e-6) -> ValidationReport:
    """Sampled containment and derivative-bound audit plus joint continuity."""
    report = ValidationReport(samples=n_samples)
    ts = np.linspace(traj.t0, traj.t_end, n_samples)
    cube_idx = 0
    for t in ts:
        while cube_idx + 1 < len(corridor) and t > corridor[cube_idx].t_hi + 1e-12:
            cube_idx += 1
        cube = corridor[cube_idx]
        sample = traj.sample(float(t))
        for axis in ("s", "d"):
            pos, vel, acc, _ = sample[axis]
            lo, hi = cube.bounds(axis)
            if pos < lo - tol or pos > hi + tol:
                report.containment_violations += 1
            v_lo, v_hi = cube.vel_bounds(axis)
            if vel < v_lo - tol or vel > v_hi + tol:
                report.velocity_violations += 1
            a_lo, a_hi = cube.acc_bounds(axis)
            if acc < a_lo - tol or acc > a_hi + tol:
                report.accel_violations += 1
    if len(traj.segments) > 1:
        report.max_joint_mismatch = float(np.abs(traj.joint_mismatches()).max())
    return report


@dataclass
class BehaviorFeedback:
    """Returned instead of a trajectory when the corridor QP cannot be met."""

    reason: str
    failing_segment: int = -1
    axis: str = ""
    detail: str = ""


def plan_trajectory(decision: Decision, snapshot: WorldSnapshot, cfg: Config,
                    start: Optional[StartState] = None
                    ) -> Union[PiecewiseTrajectory, BehaviorFeedback]:
    """Corridor + QP + validation; infeasibility falls back to the caller."""
    lane = snapshot.lane(decision.target_lane)
    try:
        corridor = build_corridor(decision, snapshot, lane, cfg)
    except SeedInCollision as exc:
        return BehaviorFeedback(reason="seed_in_collision", detail=str(exc))
    if start is None:
        start = start_state_from_vehicle(snapshot.agents[0], lane)
    times, s_refs, d_refs = decision_frenet_refs(decision, lane)

    controls = {}
    for axis, refs in (("s", s_refs), ("d", d_refs)):
        qp = formulate_qp(corridor, times, refs, start.axis(axis), axis, cfg)
        sol = solve_qp(qp)
        if not sol.ok:
            return BehaviorFeedback(reason="qp_" + sol.status, axis=axis,
                                    failing_segment=_blame_segment(qp, sol, corridor),
                                    detail=sol.diagnostics)
        controls[axis] = sol.x
    segments = []
    for j, cube in enumerate(corridor):
        sl = slice(j * N_CTRL, (j + 1) * N_CTRL)
        segments.append(BezierSegment(
            t0=cube.t_lo, duration=cube.duration,
            control_s=controls["s"][sl], control_d=controls["d"][sl]))
    return PiecewiseTrajectory(tuple(segments))


def _blame_segment(qp: QpProblem, sol: QpSolution,
                   corridor: list[SpatioTemporalCube]) -> int:
    if sol.x is None:
        return 0
    viol = qp.G @ sol.x - qp.h
    if not len(viol) or viol.max() <= 0:
        return 0
    # constraint blocks are laid out per segment in order
    worst = int(np.argmax(viol))
    rows_per_seg = len(viol) // max(len(corridor), 1)
    return min(worst // max(rows_per_seg, 1), len(corridor) - 1)

"""Spatio-temporal corridor construction around a behavior decision.

Cubes live in the (s, d, t) frame of the decision's terminal lane.  Each
pair of consecutive decision states seeds one cube; faces grow outward
until blocked by predicted agent boxes, static obstacles or the road
edge.  Time-adjacent cubes merge while their union stays obstacle-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..behavior import Decision
from ..config import Config
from ..errors import SeedInCollision
from ..semantic_map import (LaneGeometry, WorldSnapshot,
                            lateral_offset_between, project_points)


@dataclass(frozen=True)
class SpatioTemporalCube:
    s_lo: float
    s_hi: float
    d_lo: float
    d_hi: float
    t_lo: float
    t_hi: float
    vs_bounds: tuple[float, float] = (-0.5, 30.0)
    vd_bounds: tuple[float, float] = (-3.0, 3.0)
    as_bounds: tuple[float, float] = (-6.0, 6.0)
    ad_bounds: tuple[float, float] = (-4.0, 4.0)

    def __post_init__(self) -> None:
        if not (self.s_lo < self.s_hi and self.d_lo < self.d_hi
                and self.t_lo < self.t_hi):
            raise ValueError(f"degenerate cube {self}")

    def bounds(self, axis: str) -> tuple[float, float]:
        return (self.s_lo, self.s_hi) if axis == "s" else (self.d_lo, self.d_hi)

    def vel_bounds(self, axis: str) -> tuple[float, float]:
        return self.vs_bounds if axis == "s" else self.vd_bounds

    def acc_bounds(self, axis: str) -> tuple[float, float]:
        return self.as_bounds if axis == "s" else self.ad_bounds

    @property
    def duration(self) -> float:
        return self.t_hi - self.t_lo


def decision_frenet_refs(decision: Decision, lane: LaneGeometry
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, s_refs, d_refs) of the ego decision on the reference lane."""
    times = decision.times()
    s_refs, d_refs = project_points(lane, decision.states[:, 0, :2])
    return times, s_refs, d_refs


def _road_d_bounds(snapshot: WorldSnapshot, lane: LaneGeometry, s_mid: float
                   ) -> tuple[float, float]:
    """Drivable lateral band around the reference centerline."""
    d_hi = lane.width / 2.0
    cur = lane
    while cur.left_neighbor is not None:
        nxt = snapshot.lane(cur.left_neighbor)
        d_hi = lateral_offset_between(lane, nxt, s_mid) + nxt.width / 2.0
        cur = nxt
    d_lo = -lane.width / 2.0
    cur = lane
    while cur.right_neighbor is not None:
        nxt = snapshot.lane(cur.right_neighbor)
        d_lo = lateral_offset_between(lane, nxt, s_mid) - nxt.width / 2.0
        cur = nxt
    return d_lo, d_hi


def _obstacle_boxes(decision: Decision, snapshot: WorldSnapshot,
                    lane: LaneGeometry, cfg: Config) -> np.ndarray:
    """(B, 6) rows [s_lo, s_hi, d_lo, d_hi, t_lo, t_hi], inflated by the
    ego half body plus margin so the corridor bounds the body center."""
    margin = cfg.trajectory.agent_margin
    ego = snapshot.agents[0]
    pad_s = ego.length / 2.0 + margin
    pad_d = ego.width / 2.0 + margin
    rows = []
    times = decision.times()
    dt = decision.dt
    for obs in snapshot.static_obstacles:
        if obs.lane_id == lane.id:
            off = 0.0
        else:
            off = lateral_offset_between(lane, snapshot.lane(obs.lane_id),
                                         0.5 * (obs.s_min + obs.s_max))
        rows.append((obs.s_min - pad_s, obs.s_max + pad_s,
                     obs.d_min + off - pad_d, obs.d_max + off + pad_d,
                     -math.inf, math.inf))
    n_steps = decision.states.shape[0]
    for row in range(1, decision.states.shape[1]):
        aid = decision.agent_ids[row]
        body = snapshot.agents[aid]
        half_l = body.length / 2.0 + pad_s
        half_w = body.width / 2.0 + pad_d
        s, d = project_points(lane, decision.states[:, row, :2])
        for k in range(n_steps):
            rows.append((s[k] - half_l, s[k] + half_l,
                         d[k] - half_w, d[k] + half_w,
                         times[k] - dt, times[k] + dt))
    if not rows:
        return np.zeros((0, 6))
    return np.asarray(rows)


def _boxes_in_window(boxes: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray:
    if not len(boxes):
        return boxes
    active = (boxes[:, 4] < t_hi) & (boxes[:, 5] > t_lo)
    return boxes[active]


def _overlaps(boxes: np.ndarray, s_lo, s_hi, d_lo, d_hi) -> bool:
    if not len(boxes):
        return False
    hit = ((boxes[:, 0] < s_hi) & (boxes[:, 1] > s_lo)
           & (boxes[:, 2] < d_hi) & (boxes[:, 3] > d_lo))
    return bool(hit.any())


def _grow_axis(boxes: np.ndarray, lo: float, hi: float, other_lo: float,
               other_hi: float, cap_lo: float, cap_hi: float,
               axis_first: bool) -> tuple[float, float]:
    """Grow one axis interval to the nearest blockers (exact expansion)."""
    if len(boxes):
        if axis_first:
            sel = (boxes[:, 2] < other_hi) & (boxes[:, 3] > other_lo)
            b_lo, b_hi = boxes[sel, 0], boxes[sel, 1]
        else:
            sel = (boxes[:, 0] < other_hi) & (boxes[:, 1] > other_lo)
            b_lo, b_hi = boxes[sel, 2], boxes[sel, 3]
        ahead = b_lo[b_lo >= hi - 1e-12]
        behind = b_hi[b_hi <= lo + 1e-12]
        hi_limit = float(ahead.min()) if len(ahead) else math.inf
        lo_limit = float(behind.max()) if len(behind) else -math.inf
    else:
        hi_limit, lo_limit = math.inf, -math.inf
    return max(lo_limit, cap_lo), min(hi_limit, cap_hi)


def build_corridor(decision: Decision, snapshot: WorldSnapshot,
                   lane: LaneGeometry, cfg: Config) -> list[SpatioTemporalCube]:
    """Seed one cube per decision interval, inflate, then merge in time."""
    tp = cfg.trajectory
    times, s_refs, d_refs = decision_frenet_refs(decision, lane)
    boxes = _obstacle_boxes(decision, snapshot, lane, cfg)
    road_lo, road_hi = _road_d_bounds(snapshot, lane, float(s_refs[0]))
    d_half_cap = tp.max_d_half_frac * lane.width / 2.0

    cubes: list[SpatioTemporalCube] = []
    vel_s = (tp.v_min_s, tp.v_max_s)
    vel_d = (-tp.v_max_d, tp.v_max_d)
    acc_s = (-tp.a_max_s, tp.a_max_s)
    acc_d = (-tp.a_max_d, tp.a_max_d)
    eps = 1e-6
    for k in range(len(times) - 1):
        s_lo = min(s_refs[k], s_refs[k + 1]) - eps
        s_hi = max(s_refs[k], s_refs[k + 1]) + eps
        d_lo = min(d_refs[k], d_refs[k + 1]) - eps
        d_hi = max(d_refs[k], d_refs[k + 1]) + eps
        active = _boxes_in_window(boxes, times[k], times[k + 1])
        if _overlaps(active, s_lo, s_hi, d_lo, d_hi):
            raise SeedInCollision(f"decision state at t={times[k]:.2f} overlaps an obstacle")
        # length first (the seed's own lateral band), then lateral freedom
        s_lo, s_hi = _grow_axis(active, s_lo, s_hi, d_lo, d_hi,
                                s_lo - tp.max_s_half, s_hi + tp.max_s_half,
                                axis_first=True)
        d_lo, d_hi = _grow_axis(active, d_lo, d_hi, s_lo, s_hi,
                                max(road_lo, 0.5 * (d_lo + d_hi) - d_half_cap),
                                min(road_hi, 0.5 * (d_lo + d_hi) + d_half_cap),
                                axis_first=False)
        cubes.append(SpatioTemporalCube(
            s_lo=s_lo, s_hi=s_hi, d_lo=d_lo, d_hi=d_hi,
            t_lo=float(times[k]), t_hi=float(times[k + 1]),
            vs_bounds=vel_s, vd_bounds=vel_d, as_bounds=acc_s, ad_bounds=acc_d))

    return _merge_cubes(cubes, boxes, cfg)


def _merge_cubes(cubes: list[SpatioTemporalCube], boxes: np.ndarray,
                 cfg: Config, max_steps: int = 5) -> list[SpatioTemporalCube]:
    """Greedy union of consecutive cubes while the union stays clean."""
    merged: list[SpatioTemporalCube] = []
    i = 0
    while i < len(cubes):
        run = cubes[i]
        count = 1
        while i + count < len(cubes) and count < max_steps:
            nxt = cubes[i + count]
            s_lo = min(run.s_lo, nxt.s_lo)
            s_hi = max(run.s_hi, nxt.s_hi)
            d_lo = min(run.d_lo, nxt.d_lo)
            d_hi = max(run.d_hi, nxt.d_hi)
            active = _boxes_in_window(boxes, run.t_lo, nxt.t_hi)
            if _overlaps(active, s_lo, s_hi, d_lo, d_hi):
                break
            run = SpatioTemporalCube(
                s_lo=s_lo, s_hi=s_hi, d_lo=d_lo, d_hi=d_hi,
                t_lo=run.t_lo, t_hi=nxt.t_hi,
                vs_bounds=run.vs_bounds, vd_bounds=run.vd_bounds,
                as_bounds=run.as_bounds, ad_bounds=run.ad_bounds)
            count += 1
        merged.append(run)
        i += count
    return merged

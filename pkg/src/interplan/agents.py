"""Low-level driver models used inside forward simulation.

Everything here is a pure function of its inputs: the car-following law,
pure pursuit steering, the gap-informed merge controller, the kinematic
bicycle transition and the safe-distance check with its control override.
The compiled rollout kernel mirrors these formulas; this module is the
reference implementation and the one the unit tests pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .actions import LateralManeuver, SemanticAction
from .config import Config, GapControlParams, IdmParams, PurePursuitParams, RssParams
from .errors import EmptyPath, NonpositiveGap, SimCollision
from .semantic_map import (LaneGeometry, VehicleState, WorldSnapshot,
                           agents_on_lane, to_frenet)


@dataclass(frozen=True)
class ControlInput:
    accel: float
    steer: float


@dataclass(frozen=True)
class LaneChangeContext:
    """Inputs of the merge controller, all in the target-lane frame.

    Follower (new rear vehicle) quantities refer to its front bumper,
    leader (new front vehicle) quantities to its rear bumper.  Either
    vehicle may be absent.
    """

    marking_offset: float           # d_c: lane marking position from current centerline
    ego_width: float
    lateral_clearance: float        # l_safe
    obstacle_clearance: float       # l_oc: observed obstacle distance to marking
    s_ego: float
    v_ego: float
    s_rear: Optional[float] = None      # s_r, front bumper of new follower
    v_rear: Optional[float] = None
    s_front: Optional[float] = None     # s_f, rear bumper of new leader
    v_front: Optional[float] = None
    v_pref: float = 10.0
    min_spacing: float = 2.0        # l_min
    safe_headway: float = 1.0       # T_safe
    gain_v: float = 1.0             # K_v
    gain_s: float = 0.5             # K_s


def idm_free_accel(v: float, p: IdmParams) -> float:
    """Free-road acceleration toward the desired speed."""
    return p.max_accel * (1.0 - (v / p.desired_speed) ** p.exponent)


def idm_accel(v: float, v_lead: Optional[float], gap: Optional[float],
              p: IdmParams, accel_hard_max: float = 6.0) -> float:
    """Car-following acceleration; free-road law when no leader is given."""
    if v_lead is None or gap is None:
        a = idm_free_accel(v, p)
    else:
        if gap <= 0.0:
            raise NonpositiveGap(f"gap={gap}")
        dv = v - v_lead
        s_star = p.min_spacing + max(
            0.0, v * p.time_headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel)))
        a = p.max_accel * (1.0 - (v / p.desired_speed) ** p.exponent - (s_star / gap) ** 2)
    return min(max(a, -accel_hard_max), p.max_accel)


def lookahead_distance(v: float, pp: PurePursuitParams) -> float:
    return min(max(pp.lookahead_gain * v, pp.lookahead_min), pp.lookahead_max)


def pure_pursuit_steer(state: VehicleState, reference_path: np.ndarray,
                       lookahead: float, steer_max: float = 0.65) -> float:
    """Steering toward the point `lookahead` meters ahead on the path."""
    path = np.asarray(reference_path, dtype=float)
    if path.ndim != 2 or len(path) < 2:
        raise EmptyPath("reference path needs at least two points")
    if lookahead <= 0:
        raise ValueError("lookahead must be positive")
    diffs = np.diff(path, axis=0)
    seg_len = np.hypot(diffs[:, 0], diffs[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    rel = path[:-1] - state.position
    t = np.clip(-(rel * diffs).sum(axis=1) / seg_len**2, 0.0, 1.0)
    foot = path[:-1] + t[:, None] * diffs
    i = int(np.argmin(((foot - state.position) ** 2).sum(axis=1)))
    s0 = cum[i] + t[i] * seg_len[i]
    s_target = s0 + lookahead
    if s_target >= cum[-1]:
        # extrapolate past the end along the final segment direction
        tail = diffs[-1] / seg_len[-1]
        target = path[-1] + (s_target - cum[-1]) * tail
    else:
        j = int(np.searchsorted(cum, s_target, side="right") - 1)
        tt = (s_target - cum[j]) / seg_len[j]
        target = path[j] + tt * diffs[j]
    alpha = math.atan2(target[1] - state.y, target[0] - state.x) - state.heading
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    steer = math.atan2(2.0 * state.wheelbase * math.sin(alpha), lookahead)
    return min(max(steer, -steer_max), steer_max)


def alternate_reference_offset(ctx: LaneChangeContext) -> float:
    """Lateral position of the fallback path that hugs the lane marking."""
    return (ctx.marking_offset - ctx.ego_width / 2.0
            - max(0.0, ctx.lateral_clearance - ctx.obstacle_clearance))


def desired_longitudinal_state(ctx: LaneChangeContext) -> tuple[float, float]:
    """Target (s, v) aligned with the selected gap; absent neighbors drop out."""
    s_des, v_des = ctx.s_ego, ctx.v_pref
    if ctx.s_rear is not None:
        s_tr = ctx.s_rear + ctx.min_spacing + ctx.safe_headway * ctx.v_rear
        s_des = max(s_tr, ctx.s_ego)
        v_des = max(ctx.v_rear, ctx.v_pref)
    if ctx.s_front is not None:
        s_tf = ctx.s_front - ctx.min_spacing + ctx.safe_headway * ctx.v_ego
        s_des = min(s_des, s_tf)
        v_des = min(v_des, ctx.v_front)
    return s_des, v_des


def gap_track_accel(ctx: LaneChangeContext, s_des: float, v_des: float,
                    accel_hard_max: float = 6.0) -> float:
    a = ctx.gain_v * (v_des + ctx.gain_s * (s_des - ctx.s_ego) - ctx.v_ego)
    return min(max(a, -accel_hard_max), accel_hard_max)


def _bicycle_rk4(x: float, y: float, heading: float, v: float,
                 accel: float, steer: float, wheelbase: float,
                 dt: float) -> tuple[float, float, float, float]:
    tan_steer = math.tan(steer) / wheelbase

    def deriv(xx, yy, th, vv):
        return (vv * math.cos(th), vv * math.sin(th), vv * tan_steer, accel)

    k1 = deriv(x, y, heading, v)
    k2 = deriv(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1],
               heading + 0.5 * dt * k1[2], v + 0.5 * dt * k1[3])
    k3 = deriv(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1],
               heading + 0.5 * dt * k2[2], v + 0.5 * dt * k2[3])
    k4 = deriv(x + dt * k3[0], y + dt * k3[1], heading + dt * k3[2], v + dt * k3[3])
    return (
        x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        y + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        heading + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        v + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
    )


def step_bicycle(state: VehicleState, u: ControlInput, dt: float) -> VehicleState:
    """Kinematic bicycle transition, RK4 integrated; speed floored at zero."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, th, v = state.x, state.y, state.heading, state.speed
    a = u.accel
    if v <= 0.0 and a <= 0.0:
        return replace(state, speed=0.0, accel=a, steer=u.steer)
    if a < 0.0 and v + a * dt < 0.0:
        # integrate exactly up to the stop time, then hold
        t_stop = v / (-a)
        x, y, th, v = _bicycle_rk4(x, y, th, v, a, u.steer, state.wheelbase, t_stop)
        v = 0.0
    else:
        x, y, th, v = _bicycle_rk4(x, y, th, v, a, u.steer, state.wheelbase, dt)
    return replace(state, x=x, y=y, heading=th, speed=max(v, 0.0),
                   accel=a, steer=u.steer)


@dataclass(frozen=True)
class FrenetBody:
    """Agent footprint in a common lane frame for safe-distance checks."""

    s: float
    d: float
    vs: float
    vd: float
    length: float
    width: float


@dataclass(frozen=True)
class RssStatus:
    safe: bool
    v_lb: float = 0.0
    v_ub: float = math.inf
    accel_lo: float = -math.inf
    accel_hi: float = math.inf
    block_left: bool = False
    block_right: bool = False


def rss_longitudinal_distance(v_rear: float, v_front: float, p: RssParams) -> float:
    """Minimum front gap for the rear vehicle to always be able to stop."""
    v_rho = v_rear + p.response_time * p.max_accel
    d = (v_rear * p.response_time
         + 0.5 * p.max_accel * p.response_time ** 2
         + v_rho * v_rho / (2.0 * p.min_brake)
         - v_front * v_front / (2.0 * p.max_brake))
    return max(0.0, d)


def rss_lateral_distance(v_toward_1: float, v_toward_2: float, p: RssParams) -> float:
    """Minimum lateral gap; velocities are positive toward the other vehicle."""
    def side(v: float) -> float:
        v_rho = v + p.response_time * p.lat_fluct_accel
        c = 0.5 * (v + v_rho) * p.response_time
        if v_rho > 0.0:
            c += v_rho * v_rho / (2.0 * p.lat_min_brake)
        return c
    return p.lat_margin + max(0.0, side(v_toward_1) + side(v_toward_2))


def _max_safe_rear_speed(gap: float, v_front: float, p: RssParams) -> float:
    """Invert the longitudinal distance for the rear vehicle's speed."""
    rhs = gap + v_front * v_front / (2.0 * p.max_brake) - 0.5 * p.max_accel * p.response_time ** 2
    a = 1.0 / (2.0 * p.min_brake)
    c0 = p.response_time * p.max_accel
    # a*(v + c0)^2 + rho*v = rhs
    A = a
    B = 2.0 * a * c0 + p.response_time
    C = a * c0 * c0 - rhs
    disc = B * B - 4.0 * A * C
    if disc <= 0.0:
        return 0.0
    return max(0.0, (-B + math.sqrt(disc)) / (2.0 * A))


def _min_safe_front_speed(gap: float, v_rear: float, p: RssParams) -> float:
    """Smallest front-vehicle speed that keeps the follower's gap safe."""
    need = (v_rear * p.response_time + 0.5 * p.max_accel * p.response_time ** 2
            + (v_rear + p.response_time * p.max_accel) ** 2 / (2.0 * p.min_brake)
            - gap)
    if need <= 0.0:
        return 0.0
    return math.sqrt(2.0 * p.max_brake * need)


def rss_check(ego: FrenetBody, others: Sequence[FrenetBody], p: RssParams,
              speed_max: float = 30.0) -> RssStatus:
    """Pairwise safe-distance check in a common lane frame.

    A situation is dangerous only when the longitudinal and the lateral
    safe distances are both violated.  When dangerous, the status carries
    the admissible speed interval and acceleration bounds of the proper
    response.
    """
    v_lb, v_ub = 0.0, math.inf
    accel_hi = math.inf
    block_left = block_right = False
    dangerous = False
    for other in others:
        ego_ahead = ego.s >= other.s
        if ego_ahead:
            gap_lon = (ego.s - ego.length / 2.0) - (other.s + other.length / 2.0)
            d_lon = rss_longitudinal_distance(other.vs, ego.vs, p)
        else:
            gap_lon = (other.s - other.length / 2.0) - (ego.s + ego.length / 2.0)
            d_lon = rss_longitudinal_distance(ego.vs, other.vs, p)
        lon_violated = gap_lon < d_lon
        if not lon_violated:
            continue
        gap_lat = abs(ego.d - other.d) - (ego.width + other.width) / 2.0
        if ego.d <= other.d:
            d_lat = rss_lateral_distance(ego.vd, -other.vd, p)
            toward = ego.vd
            other_side_left = True
        else:
            d_lat = rss_lateral_distance(-ego.vd, other.vd, p)
            toward = -ego.vd
            other_side_left = False
        if gap_lat >= d_lat:
            continue
        dangerous = True
        if ego_ahead:
            v_lb = max(v_lb, _min_safe_front_speed(gap_lon, other.vs, p))
        else:
            v_ub = min(v_ub, _max_safe_rear_speed(gap_lon, other.vs, p))
            accel_hi = min(accel_hi, -p.min_brake)
        if toward > 1e-6:
            if other_side_left:
                block_left = True
            else:
                block_right = True
    if not dangerous:
        return RssStatus(safe=True)
    v_ub = min(v_ub, speed_max)
    return RssStatus(safe=False, v_lb=v_lb, v_ub=v_ub,
                     accel_lo=-p.max_brake, accel_hi=accel_hi,
                     block_left=block_left, block_right=block_right)


def safety_override(u: ControlInput, status: RssStatus) -> ControlInput:
    """Clamp a control into the proper-response bounds; identity when safe."""
    if status.safe:
        return u
    accel = min(max(u.accel, status.accel_lo), status.accel_hi)
    steer = u.steer
    if status.block_left and steer > 0.0:
        steer = 0.0
    if status.block_right and steer < 0.0:
        steer = 0.0
    if accel == u.accel and steer == u.steer:
        return u
    return ControlInput(accel=accel, steer=steer)


def offset_polyline(lane: LaneGeometry, offset: float) -> np.ndarray:
    """Centerline shifted laterally by `offset` (positive left)."""
    pts = lane.centerline
    normals = np.empty_like(pts)
    seg_n = np.stack([-np.sin(lane.headings), np.cos(lane.headings)], axis=1)
    normals[:-1] = seg_n
    normals[-1] = seg_n[-1]
    return pts + offset * normals


def _leader_along(snapshot: WorldSnapshot, lane: LaneGeometry, s_from: float,
                  exclude: tuple[int, ...], consider_range: float
                  ) -> Optional[tuple[float, float, float]]:
    """Closest body ahead on a lane: returns (s_center, speed_s, length)."""
    best: Optional[tuple[float, float, float]] = None
    for a in agents_on_lane(snapshot, lane, exclude=exclude,
                            half_width_scale=2.0 * consider_range / lane.width):
        if a.s > s_from and (best is None or a.s < best[0]):
            best = (a.s, a.speed_s, snapshot.agents[a.agent_id].length)
    for obs in snapshot.static_obstacles:
        if obs.lane_id != lane.id:
            continue
        s_center = 0.5 * (obs.s_min + obs.s_max)
        if s_center > s_from and (best is None or s_center < best[0]):
            best = (s_center, 0.0, obs.s_max - obs.s_min)
    return best


def _idm_against(leader: Optional[tuple[float, float, float]], s_ego: float,
                 v_ego: float, ego_length: float, idm: IdmParams,
                 accel_hard_max: float) -> float:
    if leader is None:
        return idm_accel(v_ego, None, None, idm, accel_hard_max)
    gap = (leader[0] - leader[2] / 2.0) - (s_ego + ego_length / 2.0)
    if gap <= 0.0:
        raise SimCollision(f"leader gap {gap:.3f} m")
    try:
        return idm_accel(v_ego, leader[1], gap, idm, accel_hard_max)
    except NonpositiveGap as exc:  # pragma: no cover - guarded above
        raise SimCollision(str(exc)) from exc


def simple_agent_control(snapshot: WorldSnapshot, agent_id: int,
                         intended_centerline: LaneGeometry, idm: IdmParams,
                         cfg: Config) -> ControlInput:
    """Cruise controller of a background agent: car following plus path tracking."""
    state = snapshot.agents[agent_id]
    fs = to_frenet(intended_centerline, state)
    leader = _leader_along(snapshot, intended_centerline, fs.s, (agent_id,),
                           cfg.planner.lateral_consider_range)
    accel = _idm_against(leader, fs.s, state.speed, state.length, idm,
                         cfg.planner.accel_hard_max)
    ld = lookahead_distance(state.speed, cfg.pure_pursuit)
    steer = pure_pursuit_steer(state, intended_centerline.centerline, ld,
                               cfg.pure_pursuit.steer_max)
    return ControlInput(accel=accel, steer=steer)


def _target_space_free(snapshot: WorldSnapshot, target: LaneGeometry,
                       s_ego: float, ego_length: float, margin: float,
                       exclude: tuple[int, ...]) -> bool:
    lo = s_ego - ego_length / 2.0 - margin
    hi = s_ego + ego_length / 2.0 + margin
    for a in agents_on_lane(snapshot, target, exclude=exclude):
        other = snapshot.agents[a.agent_id]
        if a.s + other.length / 2.0 > lo and a.s - other.length / 2.0 < hi:
            return False
    return True


def _marking_clearance(snapshot: WorldSnapshot, current: LaneGeometry,
                       target: LaneGeometry, s_lo: float, s_hi: float,
                       exclude: tuple[int, ...]) -> float:
    """Min distance from target-lane bodies (near the ego) to the lane marking.

    The marking sits at |d| = half width on the ego side of the target lane.
    """
    clearance = math.inf
    # current lane left of target -> the marking sits on the target's left side
    side = 1.0 if target.left_neighbor == current.id else -1.0
    for a in agents_on_lane(snapshot, target, exclude=exclude):
        other = snapshot.agents[a.agent_id]
        if a.s + other.length / 2.0 < s_lo or a.s - other.length / 2.0 > s_hi:
            continue
        edge_d = a.d * side + other.width / 2.0        # most ego-ward body edge
        clearance = min(clearance, max(0.0, target.width / 2.0 - edge_d))
    return clearance


def context_aware_control(snapshot: WorldSnapshot, ego_id: int,
                          active_action: SemanticAction, cfg: Config,
                          preferred_speed: Optional[float] = None) -> ControlInput:
    """Ego rollout controller: reactive lateral plus gap-informed longitudinal.

    Lane keeping reduces to car following along the current centerline.
    For a lane change the longitudinal command is the minimum of the
    car-following and the gap-tracking accelerations, and the lateral
    reference switches to the marking-hugging fallback while the target
    gap is occupied.
    """
    ego = snapshot.agents[ego_id]
    v_pref = cfg.planner.preferred_speed if preferred_speed is None else preferred_speed
    idm = cfg.ego_style_idm(active_action.longitudinal.value)
    if preferred_speed is not None:
        scale = idm.desired_speed / cfg.planner.preferred_speed
        idm = replace(idm, desired_speed=preferred_speed * scale)
    target = snapshot.lane(active_action.target_lane)
    # current lane: nearest centerline
    current = min(snapshot.lanes, key=lambda ln: abs(to_frenet(ln, ego).d))
    fs_cur = to_frenet(current, ego)
    leader_cur = _leader_along(snapshot, current, fs_cur.s, (ego_id,),
                               cfg.planner.lateral_consider_range)
    a_idm = _idm_against(leader_cur, fs_cur.s, ego.speed, ego.length, idm,
                         cfg.planner.accel_hard_max)
    ld = lookahead_distance(ego.speed, cfg.pure_pursuit)
    if target.id == current.id:
        steer = pure_pursuit_steer(ego, current.centerline, ld, cfg.pure_pursuit.steer_max)
        return ControlInput(accel=a_idm, steer=steer)

    fs_t = to_frenet(target, ego)
    gc = cfg.gap_control
    ahead, behind = None, None
    for a in agents_on_lane(snapshot, target, exclude=(ego_id,)):
        if a.s > fs_t.s:
            if ahead is None or a.s < ahead.s:
                ahead = a
        elif behind is None or a.s > behind.s:
            behind = a
    ctx = LaneChangeContext(
        marking_offset=current.width / 2.0,
        ego_width=ego.width,
        lateral_clearance=gc.lateral_clearance,
        obstacle_clearance=0.0,
        s_ego=fs_t.s,
        v_ego=ego.speed,
        s_rear=None if behind is None else behind.s + snapshot.agents[behind.agent_id].length / 2.0,
        v_rear=None if behind is None else behind.speed_s,
        s_front=None if ahead is None else ahead.s - snapshot.agents[ahead.agent_id].length / 2.0,
        v_front=None if ahead is None else ahead.speed_s,
        v_pref=v_pref,
        min_spacing=gc.min_spacing,
        safe_headway=gc.safe_headway,
        gain_v=gc.gain_v,
        gain_s=gc.gain_s,
    )
    s_des, v_des = desired_longitudinal_state(ctx)
    a_track = gap_track_accel(ctx, s_des, v_des, cfg.planner.accel_hard_max)
    accel = min(a_track, a_idm)

    if _target_space_free(snapshot, target, fs_t.s, ego.length, gc.min_spacing, (ego_id,)):
        reference = target.centerline
    else:
        l_oc = _marking_clearance(snapshot, current, target,
                                  fs_t.s - ego.length / 2.0 - gc.min_spacing,
                                  fs_t.s + ego.length / 2.0 + gc.min_spacing,
                                  (ego_id,))
        ctx = replace(ctx, obstacle_clearance=0.0 if math.isinf(l_oc) else l_oc)
        toward = 1.0 if current.left_neighbor == target.id else -1.0
        reference = offset_polyline(current, toward * alternate_reference_offset(ctx))
    steer = pure_pursuit_steer(ego, reference, ld, cfg.pure_pursuit.steer_max)
    return ControlInput(accel=accel, steer=steer)

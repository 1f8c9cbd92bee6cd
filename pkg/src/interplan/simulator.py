"""Closed-loop highway world: scripted traffic, planner-in-the-loop stepping,
the forced-merge benchmark and its ablation variants.

Background agents run an adaptive cruising policy: car following with an
aggressiveness-dependent headway, switching their effective leader to a
cut-in vehicle once its centroid enters the cooperative range.  The ego
executes the motion layer's trajectory exactly (idealized tracking).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from . import behavior as bh
from .actions import SemanticAction
from .config import TRAFFIC_AGGRESSIVENESS, Config, with_overrides
from .errors import PlanningFailed
from .semantic_map import (StaticObstacle, VehicleState, WorldSnapshot,
                           from_frenet, straight_lane, to_frenet, FrenetState)
from .trajectory import (BehaviorFeedback, PiecewiseTrajectory, plan_trajectory,
                         start_state_from_vehicle)
from .trajectory.planner import StartState


@dataclass(frozen=True)
class AiAgentPolicy:
    """Background traffic controller settings for one aggressiveness level."""

    aggressiveness: int
    cooperative_range: float
    centerline_id: int

    @classmethod
    def for_level(cls, level: int, centerline_id: int) -> "AiAgentPolicy":
        return cls(aggressiveness=level,
                   cooperative_range=TRAFFIC_AGGRESSIVENESS[level]["cooperative_range"],
                   centerline_id=centerline_id)


@dataclass
class RunMetrics:
    avg_speed: float = 0.0
    avg_safety_cost: float = 0.0
    merge_completed: bool = False
    collision: bool = False
    planning_failures: int = 0
    trajectory_fallbacks: int = 0
    cycles: int = 0
    behavior_ms: list[float] = field(default_factory=list)
    motion_ms: list[float] = field(default_factory=list)

    def summary_dict(self) -> dict:
        """Deterministic metrics; wall-clock timings are reported separately."""
        return {
            "avg_speed": self.avg_speed,
            "avg_safety_cost": self.avg_safety_cost,
            "merge_completed": self.merge_completed,
            "collision": self.collision,
            "planning_failures": self.planning_failures,
            "trajectory_fallbacks": self.trajectory_fallbacks,
            "cycles": self.cycles,
        }

    def timing_dict(self) -> dict:
        def stats(xs: list[float]) -> dict:
            if not xs:
                return {"median_ms": 0.0, "p99_ms": 0.0, "max_ms": 0.0}
            arr = np.asarray(xs)
            return {"median_ms": float(np.median(arr)),
                    "p99_ms": float(np.percentile(arr, 99)),
                    "max_ms": float(arr.max())}
        return {"behavior": stats(self.behavior_ms), "motion": stats(self.motion_ms)}


@dataclass
class CycleRecord:
    cycle: int
    t: float
    agents: dict[int, tuple[float, float, float, float]]
    chosen_policy: int
    chosen_maneuver: tuple[str, int]
    reward: float
    safety_cost: float
    ego_speed: float
    planning_failed: bool
    trajectory_fallback: bool
    collision: bool
    merge_done: bool
    policies: list[dict]
    decision_ego: list[list[float]]
    trajectory: Optional[dict]
    user_command: Optional[str] = None
    behavior_ms: float = 0.0
    motion_ms: float = 0.0


def benchmark_world(cfg: Config, seed: int) -> tuple[WorldSnapshot, dict[int, AiAgentPolicy]]:
    """Initial snapshot of the forced-merge scenario for one seed."""
    b = cfg.benchmark
    veh = cfg.vehicle
    lanes = []
    for i in range(b.lane_count):
        y = (b.lane_count - 1 - i) * b.lane_width
        lanes.append(straight_lane(
            i, y, b.lane_length, b.lane_width,
            left_neighbor=i - 1 if i > 0 else None,
            right_neighbor=i + 1 if i < b.lane_count - 1 else None,
            change_left_allowed=i > 0,
            change_right_allowed=i < b.lane_count - 1,
        ))
    ego_lane = lanes[b.ego_lane]
    pos, heading = from_frenet(ego_lane, FrenetState(b.ego_lane, b.ego_start_s, 0.0))
    agents = {0: VehicleState(x=float(pos[0]), y=float(pos[1]), heading=heading,
                              speed=b.ego_start_speed, length=veh.length,
                              width=veh.width, wheelbase=veh.wheelbase)}
    rng = np.random.default_rng(seed)
    target = lanes[b.target_lane]
    policies = {}
    s = b.first_agent_s
    for i in range(b.agent_count):
        aid = i + 1
        jitter = float(rng.uniform(-b.agent_spacing_jitter, b.agent_spacing_jitter))
        pos, heading = from_frenet(target, FrenetState(b.target_lane, s, 0.0))
        agents[aid] = VehicleState(x=float(pos[0]), y=float(pos[1]), heading=heading,
                                   speed=b.agent_speed, length=veh.length,
                                   width=veh.width, wheelbase=veh.wheelbase)
        policies[aid] = AiAgentPolicy.for_level(b.aggressiveness, b.target_lane)
        s += b.agent_spacing + jitter
    statics = (StaticObstacle(lane_id=b.ego_lane,
                              s_min=b.obstacle_s, s_max=b.obstacle_s + veh.length,
                              d_min=-veh.width / 2.0, d_max=veh.width / 2.0),)
    snap = WorldSnapshot(timestamp=0.0, lanes=tuple(lanes), agents=agents,
                         static_obstacles=statics)
    return snap, policies


class Simulator:
    """Deterministic planner-in-the-loop world."""

    def __init__(self, cfg: Config, seed: Optional[int] = None):
        self.cfg = cfg
        self.seed = cfg.benchmark.seed if seed is None else seed
        self.snapshot, self.ai_policies = benchmark_world(cfg, self.seed)
        self.cycle = 0
        self.ongoing: Optional[SemanticAction] = None
        self.ongoing_elapsed = 0.0
        self._successor: Optional[SemanticAction] = None
        self.last_maneuver: Optional[tuple[str, int]] = None
        self.trajectory: Optional[PiecewiseTrajectory] = None
        self.trajectory_lane: Optional[int] = None
        self.collision = False
        self.merge_done = False
        self.user_command: Optional[str] = None
        self._decision_fallback: Optional[bh.Decision] = None

    # -- background traffic -------------------------------------------------

    def _ai_world_arrays(self) -> bh.KernelWorld:
        kw = bh.build_kernel_world(self.snapshot, self.cfg)
        b = self.cfg.benchmark
        level = TRAFFIC_AGGRESSIVENESS[b.aggressiveness]
        idm = self.cfg.traffic_idm(b.aggressiveness)
        for row, aid in enumerate(kw.agent_ids):
            if aid == 0:
                continue
            kw.idm[row] = (idm.desired_speed, idm.time_headway, idm.min_spacing,
                           idm.max_accel, idm.comfort_decel, idm.exponent)
            kw.consider[row] = self.ai_policies[aid].cooperative_range
        return kw

    def ai_agent_control(self, agent_id: int) -> tuple[float, float]:
        """(accel, steer) of one background agent for inspection/testing."""
        kw = self._ai_world_arrays()
        states, controls = self._step_agents_kernel(kw, self.cfg.benchmark.world_dt)
        row = kw.agent_row(agent_id)
        return float(controls[0, row, 0]), float(controls[0, row, 1])

    def _step_agents_kernel(self, kw: bh.KernelWorld, dt: float
                            ) -> tuple[np.ndarray, np.ndarray]:
        m = len(kw.agent_ids)
        lane_idx = np.zeros(m, dtype=np.int32)
        for row, aid in enumerate(kw.agent_ids):
            if aid == 0:
                lane_idx[row] = kw.lane_index(self._ego_lane_id())
            else:
                lane_idx[row] = kw.lane_index(self.ai_policies[aid].centerline_id)
        out_states = np.empty((2, m, 4))
        out_ctrl = np.zeros((1, m, 2))
        out_rss = np.zeros((1, 4))
        lane_sched = np.zeros(1, dtype=np.int32)
        idm_sched = kw.idm[:1].copy()
        K.rollout(kw.lane_x, kw.lane_y, kw.lane_s, kw.lane_off, kw.lane_width,
                  kw.stat_lane, kw.stat_s0, kw.stat_s1, kw.stat_d0, kw.stat_d1,
                  kw.st0, kw.geom, lane_idx, kw.idm, kw.consider,
                  lane_sched, idm_sched, int(lane_idx[0]),
                  kw.par, K.MODE_EXTERNAL_EGO, 0, np.zeros((1, 1, 4)),
                  out_states, out_ctrl, out_rss, 1, dt)
        return out_states, out_ctrl

    def _ego_lane_id(self) -> int:
        ego = self.snapshot.agents[0]
        return min(self.snapshot.lanes, key=lambda ln: abs(to_frenet(ln, ego).d)).id

    # -- planning -----------------------------------------------------------

    def _plan_cycle(self) -> tuple[Optional[bh.PlanResult], float]:
        duration = self.cfg.planner.action_duration
        if self.ongoing is not None and self.ongoing_elapsed >= duration - 1e-9:
            # the committed action finished: advance to the next action of
            # the previously selected policy
            self.ongoing = self._successor or self.ongoing
            self.ongoing_elapsed = 0.0
        remaining = duration - self.ongoing_elapsed
        t0 = time.perf_counter()
        try:
            result = bh.plan(self.snapshot, self.cfg,
                             user_command=self.user_command,
                             ongoing=self.ongoing,
                             last_maneuver=self.last_maneuver,
                             variant=self.cfg.benchmark.variant,
                             ongoing_remaining=remaining)
        except PlanningFailed:
            result = None
        return result, (time.perf_counter() - t0) * 1e3

    def _motion_cycle(self, result: bh.PlanResult
                      ) -> tuple[Optional[PiecewiseTrajectory], int, bool, float]:
        """Trajectory for the decision, falling back to the backup decision."""
        t0 = time.perf_counter()
        start = self._stitched_start(result.decision.target_lane)
        out = plan_trajectory(result.decision, self.snapshot, self.cfg, start=start)
        fallback = False
        lane = result.decision.target_lane
        if isinstance(out, BehaviorFeedback) and result.backup_decision is not None:
            fallback = True
            lane = result.backup_decision.target_lane
            start = self._stitched_start(lane)
            out = plan_trajectory(result.backup_decision, self.snapshot, self.cfg,
                                  start=start)
        if isinstance(out, BehaviorFeedback):
            return None, lane, True, (time.perf_counter() - t0) * 1e3
        return out, lane, fallback, (time.perf_counter() - t0) * 1e3

    def _stitched_start(self, lane_id: int) -> StartState:
        if self.trajectory is not None and self.trajectory_lane == lane_id:
            t = self.snapshot.timestamp
            if self.trajectory.t0 - 1e-9 <= t <= self.trajectory.t_end + 1e-9:
                s = self.trajectory.sample(t)
                return StartState(s=s["s"][:3], d=s["d"][:3])
        return start_state_from_vehicle(self.snapshot.agents[0],
                                        self.snapshot.lane(lane_id))

    # -- stepping -----------------------------------------------------------

    def step(self) -> CycleRecord:
        """One 20 Hz cycle: plan, optimize, advance the world."""
        cfg = self.cfg
        dt = cfg.benchmark.world_dt
        t = self.snapshot.timestamp
        result, behavior_ms = self._plan_cycle()

        planning_failed = result is None
        trajectory_fallback = False
        motion_ms = 0.0
        traj_dict = None
        if result is not None:
            traj, lane, failed_motion, motion_ms = self._motion_cycle(result)
            if traj is not None:
                self.trajectory = traj
                self.trajectory_lane = lane
                self._decision_fallback = None
                traj_dict = traj.to_dict()
                trajectory_fallback = failed_motion
            else:
                # follow the raw decision states as a last resort
                self.trajectory = None
                self._decision_fallback = result.decision
                trajectory_fallback = True
            if self.ongoing is None or not result.ongoing_next.same_maneuver(self.ongoing):
                self.ongoing_elapsed = 0.0
            self.ongoing = result.ongoing_next
            self._successor = result.ongoing_successor
            self.last_maneuver = result.chosen_maneuver
        self.ongoing_elapsed += dt

        # advance background traffic with the physical controllers
        kw = self._ai_world_arrays()
        states, controls = self._step_agents_kernel(kw, dt)
        new_agents: dict[int, VehicleState] = {}
        for row, aid in enumerate(kw.agent_ids):
            if aid == 0:
                continue
            old = self.snapshot.agents[aid]
            new_agents[aid] = replace(
                old, x=float(states[1, row, 0]), y=float(states[1, row, 1]),
                heading=float(states[1, row, 2]), speed=float(states[1, row, 3]),
                accel=float(controls[0, row, 0]), steer=float(controls[0, row, 1]))

        new_agents[0] = self._advance_ego(t + dt, planning_failed)
        self.snapshot = self.snapshot.with_agents(new_agents, t + dt)
        self.cycle += 1
        self._check_collision()
        self._check_merge()

        record = CycleRecord(
            cycle=self.cycle - 1, t=t,
            agents={aid: (st.x, st.y, st.heading, st.speed)
                    for aid, st in sorted(self.snapshot.agents.items())},
            chosen_policy=-1 if result is None else result.decision.policy_index,
            chosen_maneuver=("keep", self._ego_lane_id()) if result is None
            else result.chosen_maneuver,
            reward=0.0 if result is None else result.chosen.reward,
            safety_cost=0.0 if result is None else result.chosen.weighted_safety_cost(),
            ego_speed=self.snapshot.agents[0].speed,
            planning_failed=planning_failed,
            trajectory_fallback=trajectory_fallback,
            collision=self.collision,
            merge_done=self.merge_done,
            policies=[] if result is None else _policy_summaries(result),
            decision_ego=[] if result is None else
            [[round(float(v), 6) for v in row] for row in result.decision.states[:, 0, :]],
            trajectory=traj_dict,
            user_command=self.user_command,
            behavior_ms=behavior_ms,
            motion_ms=motion_ms,
        )
        return record

    def _advance_ego(self, t_next: float, planning_failed: bool) -> VehicleState:
        ego = self.snapshot.agents[0]
        if planning_failed or (self.trajectory is None and self._decision_fallback is None):
            # emergency handling: brake hard, hold the heading
            from .agents import ControlInput, step_bicycle
            return step_bicycle(ego, ControlInput(-self.cfg.rss.max_brake, 0.0),
                                self.cfg.benchmark.world_dt)
        if self.trajectory is not None:
            t_clip = min(t_next, self.trajectory.t_end)
            sample = self.trajectory.sample(t_clip)
            lane = self.snapshot.lane(self.trajectory_lane)
            s, vs, a_s, _ = sample["s"]
            d, vd, _, _ = sample["d"]
            pos, heading = from_frenet(lane, FrenetState(lane.id, s, d, vs, vd))
            speed = math.hypot(vs, vd)
            return replace(ego, x=float(pos[0]), y=float(pos[1]), heading=heading,
                           speed=speed, accel=a_s, steer=0.0)
        # decision-following fallback: linear interpolation between states
        dec = self._decision_fallback
        k = min(int((t_next - dec.t0) / dec.dt), dec.states.shape[0] - 2)
        frac = (t_next - dec.t0) / dec.dt - k
        a = dec.states[k, 0]
        b = dec.states[k + 1, 0]
        x = float(a[0] + frac * (b[0] - a[0]))
        y = float(a[1] + frac * (b[1] - a[1]))
        heading = float(a[2] + frac * (b[2] - a[2]))
        speed = float(max(a[3] + frac * (b[3] - a[3]), 0.0))
        return replace(ego, x=x, y=y, heading=heading, speed=speed)

    def _check_collision(self) -> None:
        if self.collision:
            return
        ego = self.snapshot.agents[0]
        ego_box = ego.corners()
        from .semantic_map import rectangles_overlap
        for aid, other in self.snapshot.agents.items():
            if aid == 0:
                continue
            if rectangles_overlap(ego_box, other.corners()):
                self.collision = True
                return
        for obs in self.snapshot.static_obstacles:
            lane = self.snapshot.lane(obs.lane_id)
            center, heading = from_frenet(lane, FrenetState(
                obs.lane_id, 0.5 * (obs.s_min + obs.s_max),
                0.5 * (obs.d_min + obs.d_max)))
            box = VehicleState(x=float(center[0]), y=float(center[1]),
                               heading=heading, speed=0.0,
                               length=obs.s_max - obs.s_min,
                               width=obs.d_max - obs.d_min).corners()
            if rectangles_overlap(ego_box, box):
                self.collision = True
                return

    def _check_merge(self) -> None:
        if self.merge_done or self.collision:
            return
        b = self.cfg.benchmark
        target = self.snapshot.lane(b.target_lane)
        ego = self.snapshot.agents[0]
        fs = to_frenet(target, ego)
        ego_lane = self.snapshot.lane(b.ego_lane)
        before_hazard = to_frenet(ego_lane, ego).s < b.obstacle_s
        if (abs(fs.d) < self.cfg.planner.completion_frac * target.width
                and abs(math.remainder(ego.heading - _lane_heading(target, fs.s),
                                       math.tau)) < 0.1
                and before_hazard):
            self.merge_done = True


def _lane_heading(lane, s: float) -> float:
    _, _, psi = lane.point_at(min(max(s, 0.0), lane.length))
    return psi


def _policy_summaries(result: bh.PlanResult) -> list[dict]:
    out = []
    for ev in result.evaluations:
        best = max(ev.scenarios, key=lambda sr: sr.scenario.weight)
        ego_xy = [[round(float(x), 3), round(float(y), 3)]
                  for x, y in best.trace.states[:, 0, :2]]
        out.append({
            "id": ev.index,
            "actions": [[a.lateral.value, a.longitudinal.value, a.target_lane]
                        for a in ev.policy.actions],
            "reward": ev.reward,
            "feasible": ev.feasible,
            "backup": ev.backup_index,
            "b_navi": ev.b_navi,
            "b_consist": ev.b_consist,
            "safety_cost": ev.weighted_safety_cost(),
            "collided": not ev.clean,
            "scenario_weights": [round(sr.scenario.weight, 6) for sr in ev.scenarios],
            "ego_trace": ego_xy,
        })
    return out


def run_benchmark(cfg: Config, seed: Optional[int] = None,
                  on_cycle: Optional[Callable[[CycleRecord], None]] = None
                  ) -> RunMetrics:
    """Run the scored window of the forced-merge scenario."""
    cfg.benchmark.validate()
    sim = Simulator(cfg, seed=seed)
    metrics = RunMetrics()
    speeds = []
    costs = []
    for _ in range(cfg.benchmark.cycles):
        record = sim.step()
        speeds.append(record.ego_speed)
        costs.append(record.safety_cost)
        metrics.planning_failures += int(record.planning_failed)
        metrics.trajectory_fallbacks += int(record.trajectory_fallback)
        metrics.behavior_ms.append(record.behavior_ms)
        metrics.motion_ms.append(record.motion_ms)
        if on_cycle is not None:
            on_cycle(record)
        if record.collision:
            metrics.collision = True
            break
    metrics.cycles = sim.cycle
    metrics.avg_speed = float(np.mean(speeds)) if speeds else 0.0
    metrics.avg_safety_cost = float(np.mean(costs)) if costs else 0.0
    metrics.merge_completed = sim.merge_done
    return metrics


def metrics_from_records(records: list[dict]) -> dict:
    """Recompute the metrics summary from logged cycle records (replay)."""
    speeds = [r["ego_speed"] for r in records]
    costs = [r["safety_cost"] for r in records]
    return {
        "avg_speed": float(np.mean(speeds)) if speeds else 0.0,
        "avg_safety_cost": float(np.mean(costs)) if costs else 0.0,
        "merge_completed": bool(records[-1]["merge_done"]) if records else False,
        "collision": bool(records[-1]["collision"]) if records else False,
        "planning_failures": int(sum(r["planning_failed"] for r in records)),
        "trajectory_fallbacks": int(sum(r["trajectory_fallback"] for r in records)),
        "cycles": len(records),
    }

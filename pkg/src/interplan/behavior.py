"""Guided-branching behavior layer.

Per planning cycle: rebuild the policy tree from the ongoing action,
enumerate candidate action sequences, pick risk-relevant intention
combinations per policy, realize each one by closed-loop multi-agent
forward simulation, score the outcomes and gate aggressive policies on
their cancellation being viable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .actions import LateralManeuver, LongitudinalStyle, SemanticAction
from .config import Config, IdmParams
from .errors import NoAvailableActions, NoCandidates, PlanningFailed
from .semantic_map import (LaneGeometry, VehicleState, WorldSnapshot,
                           to_frenet)

STYLES = (LongitudinalStyle.AGGRESSIVE, LongitudinalStyle.MODERATE,
          LongitudinalStyle.CONSERVATIVE)


# --------------------------------------------------------------------------
# policy tree


@dataclass
class TreeNode:
    action: SemanticAction
    children: list["TreeNode"] = field(default_factory=list)


@dataclass(frozen=True)
class DcpTree:
    root: TreeNode
    height: int

    def leaf_count(self) -> int:
        def count(node: TreeNode) -> int:
            if not node.children:
                return 1
            return sum(count(c) for c in node.children)
        return count(self.root)


@dataclass(frozen=True)
class PolicySequence:
    actions: tuple[SemanticAction, ...]

    @property
    def horizon(self) -> float:
        return sum(a.duration for a in self.actions)

    def outcome_lane(self) -> int:
        return self.actions[-1].target_lane

    def change_count(self) -> int:
        return sum(1 for a, b in zip(self.actions, self.actions[1:])
                   if not a.same_maneuver(b))

    def outcome_maneuver(self, start_lane: int) -> tuple[str, int]:
        lane = self.outcome_lane()
        if lane == start_lane:
            return ("keep", lane)
        return ("change", lane)


def available_actions(snapshot: WorldSnapshot, current_lane: LaneGeometry
                      ) -> list[SemanticAction]:
    """Lateral options permitted by the lane topology, crossed with styles."""
    laterals: list[tuple[LateralManeuver, int]] = [(LateralManeuver.KEEP, current_lane.id)]
    if current_lane.left_neighbor is not None and current_lane.change_left_allowed:
        laterals.append((LateralManeuver.LEFT, current_lane.left_neighbor))
    if current_lane.right_neighbor is not None and current_lane.change_right_allowed:
        laterals.append((LateralManeuver.RIGHT, current_lane.right_neighbor))
    return [SemanticAction(lat, style, lane)
            for lat, lane in laterals for style in STYLES]


def update_dcp_tree(actions: Sequence[SemanticAction], ongoing: SemanticAction,
                    height: int) -> DcpTree:
    """Rebuild the policy tree rooted at the ongoing action.

    Every root-to-leaf path changes action at most once, giving
    (|A|-1)(h-1)+1 leaves when all actions are available at every depth.
    """
    if not actions:
        raise NoAvailableActions("empty semantic action set")
    matched = next((a for a in actions if a.same_maneuver(ongoing)), None)
    if matched is None:
        matched = next(a for a in actions
                       if a.lateral == LateralManeuver.KEEP
                       and a.longitudinal == LongitudinalStyle.MODERATE)
    root = TreeNode(matched)
    node = root
    for depth in range(1, height):
        for other in actions:
            if other.same_maneuver(matched):
                continue
            branch = TreeNode(other)
            node.children.append(branch)
            for _ in range(depth + 1, height):
                nxt = TreeNode(other)
                branch.children.append(nxt)
                branch = nxt
        cont = TreeNode(matched)
        node.children.append(cont)
        node = cont
    return DcpTree(root=root, height=height)


def extract_policy_sequences(tree: DcpTree) -> list[PolicySequence]:
    out: list[PolicySequence] = []

    def walk(node: TreeNode, prefix: tuple[SemanticAction, ...]) -> None:
        path = prefix + (node.action,)
        if not node.children:
            out.append(PolicySequence(path))
            return
        for child in node.children:
            walk(child, path)

    walk(tree.root, ())
    return out


# --------------------------------------------------------------------------
# intentions and scenarios


@dataclass(frozen=True)
class IntentionBelief:
    candidates: dict[int, tuple[tuple[int, float], ...]]  # agent -> ((lane, p), ...)

    def map_assignment(self) -> dict[int, int]:
        return {aid: max(cands, key=lambda c: c[1])[0]
                for aid, cands in self.candidates.items()}


def estimate_agent_intention(snapshot: WorldSnapshot, agent_id: int, cfg: Config,
                             history: Optional[Sequence[VehicleState]] = None
                             ) -> tuple[tuple[int, float], ...]:
    """Rule-based centerline scoring turned into probabilities by softmax."""
    state = snapshot.agents[agent_id]
    projections = []
    for lane in snapshot.lanes:
        try:
            fs = to_frenet(lane, state)
        except Exception:
            continue
        projections.append((lane, fs))
    if not projections:
        raise NoCandidates(f"agent {agent_id} projects onto no lane")
    current, _ = min(projections, key=lambda p: abs(p[1].d))
    allowed = {current.id}
    if current.left_neighbor is not None and current.change_left_allowed:
        allowed.add(current.left_neighbor)
    if current.right_neighbor is not None and current.change_right_allowed:
        allowed.add(current.right_neighbor)
    p = cfg.planner
    scores, lanes = [], []
    for lane, fs in projections:
        if lane.id not in allowed:
            continue
        psi_rel = abs(math.remainder(state.heading - _tangent_heading(lane, fs.s), math.tau))
        approach = math.copysign(1.0, fs.d) * fs.vd if fs.d != 0.0 else -abs(fs.vd)
        score = (p.intent_weight_offset * abs(fs.d) / (lane.width / 2.0)
                 + p.intent_weight_heading * psi_rel
                 + p.intent_weight_rate * approach)
        scores.append(score)
        lanes.append(lane.id)
    arr = np.asarray(scores)
    w = np.exp(-(arr - arr.min()))
    w /= w.sum()
    order = np.argsort(lanes)
    return tuple((int(lanes[i]), float(w[i])) for i in order)


def _tangent_heading(lane: LaneGeometry, s: float) -> float:
    _, _, psi = lane.point_at(min(max(s, 0.0), lane.length))
    return psi


def estimate_intentions(snapshot: WorldSnapshot, cfg: Config) -> IntentionBelief:
    return IntentionBelief(candidates={
        aid: estimate_agent_intention(snapshot, aid, cfg)
        for aid in sorted(snapshot.agents) if aid != 0
    })


@dataclass(frozen=True)
class Scenario:
    assignment: tuple[tuple[int, int], ...]   # (agent, lane) sorted by agent
    weight: float
    critical: tuple[int, ...]

    def lane_of(self, agent_id: int) -> int:
        for aid, lane in self.assignment:
            if aid == agent_id:
                return lane
        raise KeyError(agent_id)


# --------------------------------------------------------------------------
# kernel marshaling


@dataclass
class KernelWorld:
    """Flattened world arrays shared by every rollout of one cycle."""

    lane_x: np.ndarray
    lane_y: np.ndarray
    lane_s: np.ndarray
    lane_off: np.ndarray
    lane_width: np.ndarray
    lane_ids: tuple[int, ...]
    stat_lane: np.ndarray
    stat_s0: np.ndarray
    stat_s1: np.ndarray
    stat_d0: np.ndarray
    stat_d1: np.ndarray
    st0: np.ndarray
    geom: np.ndarray
    idm: np.ndarray
    consider: np.ndarray
    agent_ids: tuple[int, ...]
    par: np.ndarray
    n_steps: int
    dt: float

    def lane_index(self, lane_id: int) -> int:
        return self.lane_ids.index(lane_id)

    def agent_row(self, agent_id: int) -> int:
        return self.agent_ids.index(agent_id)


def assumed_agent_idm(state: VehicleState, cfg: Config) -> IdmParams:
    """Driver model the planner assumes for everyone else."""
    return IdmParams(
        desired_speed=max(state.speed, 2.0),
        time_headway=1.5,
        min_spacing=2.0,
        max_accel=2.0,
        comfort_decel=2.5,
    )


def build_kernel_world(snapshot: WorldSnapshot, cfg: Config) -> KernelWorld:
    xs, ys, ss, off = [], [], [], [0]
    widths, ids = [], []
    for lane in snapshot.lanes:
        xs.append(lane.centerline[:, 0])
        ys.append(lane.centerline[:, 1])
        ss.append(lane.cum_s)
        off.append(off[-1] + len(lane.centerline))
        widths.append(lane.width)
        ids.append(lane.id)
    stat = snapshot.static_obstacles
    lane_pos = {lid: i for i, lid in enumerate(ids)}

    agent_ids = tuple(sorted(snapshot.agents))
    n = len(agent_ids)
    st0 = np.empty((n, 4))
    geom = np.empty((n, 3))
    idm = np.empty((n, 6))
    consider = np.full(n, cfg.planner.lateral_consider_range)
    for row, aid in enumerate(agent_ids):
        a = snapshot.agents[aid]
        st0[row] = (a.x, a.y, a.heading, a.speed)
        geom[row] = (a.length, a.width, a.wheelbase)
        p = assumed_agent_idm(a, cfg)
        idm[row] = (p.desired_speed, p.time_headway, p.min_spacing,
                    p.max_accel, p.comfort_decel, p.exponent)

    par = np.zeros(K.N_PAR)
    par[K.PAR_VPREF] = cfg.planner.preferred_speed
    par[K.PAR_KV] = cfg.gap_control.gain_v
    par[K.PAR_KS] = cfg.gap_control.gain_s
    par[K.PAR_LMIN] = cfg.gap_control.min_spacing
    par[K.PAR_TSAFE] = cfg.gap_control.safe_headway
    par[K.PAR_LSAFE] = cfg.gap_control.lateral_clearance
    par[K.PAR_LD_GAIN] = cfg.pure_pursuit.lookahead_gain
    par[K.PAR_LD_MIN] = cfg.pure_pursuit.lookahead_min
    par[K.PAR_LD_MAX] = cfg.pure_pursuit.lookahead_max
    par[K.PAR_STEER_MAX] = cfg.pure_pursuit.steer_max
    par[K.PAR_RHO] = cfg.rss.response_time
    par[K.PAR_ACC_MAX] = cfg.rss.max_accel
    par[K.PAR_BRK_MIN] = cfg.rss.min_brake
    par[K.PAR_BRK_MAX] = cfg.rss.max_brake
    par[K.PAR_LAT_ACC] = cfg.rss.lat_fluct_accel
    par[K.PAR_LAT_BRK] = cfg.rss.lat_min_brake
    par[K.PAR_LAT_MU] = cfg.rss.lat_margin
    par[K.PAR_AHARD] = cfg.planner.accel_hard_max
    par[K.PAR_VMAX] = cfg.planner.speed_max

    steps_per_action = int(round(cfg.planner.action_duration / cfg.planner.sim_dt))
    return KernelWorld(
        lane_x=np.ascontiguousarray(np.concatenate(xs)),
        lane_y=np.ascontiguousarray(np.concatenate(ys)),
        lane_s=np.ascontiguousarray(np.concatenate(ss)),
        lane_off=np.asarray(off, dtype=np.int32),
        lane_width=np.asarray(widths),
        lane_ids=tuple(ids),
        stat_lane=np.asarray([lane_pos[o.lane_id] for o in stat], dtype=np.int32),
        stat_s0=np.asarray([o.s_min for o in stat]),
        stat_s1=np.asarray([o.s_max for o in stat]),
        stat_d0=np.asarray([o.d_min for o in stat]),
        stat_d1=np.asarray([o.d_max for o in stat]),
        st0=st0, geom=geom, idm=idm, consider=consider,
        agent_ids=agent_ids, par=par,
        n_steps=cfg.planner.tree_height * steps_per_action,
        dt=cfg.planner.sim_dt,
    )


def action_step_spans(n_actions: int, n_steps: int, cfg: Config,
                      first_remaining: Optional[float] = None
                      ) -> list[tuple[int, int]]:
    """Schedule step window per action.

    The first action may already be partially executed; its window shrinks
    to the remaining duration and the last action stretches to keep the
    horizon intact.
    """
    per_action = int(round(cfg.planner.action_duration / cfg.planner.sim_dt))
    if first_remaining is None:
        first_steps = per_action
    else:
        first_steps = int(math.ceil(first_remaining / cfg.planner.sim_dt - 1e-9))
        first_steps = min(max(first_steps, 1), per_action)
    spans = []
    start = 0
    for i in range(n_actions):
        length = first_steps if i == 0 else per_action
        end = n_steps if i == n_actions - 1 else min(start + length, n_steps)
        spans.append((start, end))
        start = end
    return spans


def policy_schedule(policy: PolicySequence, kworld: KernelWorld, cfg: Config,
                    first_remaining: Optional[float] = None
                    ) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    spans = action_step_spans(len(policy.actions), kworld.n_steps, cfg,
                              first_remaining)
    lane_sched = np.empty(kworld.n_steps, dtype=np.int32)
    idm_sched = np.empty((kworld.n_steps, 6))
    for (start, end), action in zip(spans, policy.actions):
        if start >= end:
            continue
        p = cfg.ego_style_idm(action.longitudinal.value)
        row = (p.desired_speed, p.time_headway, p.min_spacing,
               p.max_accel, p.comfort_decel, p.exponent)
        lane_sched[start:end] = kworld.lane_index(action.target_lane)
        idm_sched[start:end] = row
    return lane_sched, idm_sched, spans


@dataclass
class ForwardTrace:
    """Closed-loop rollout result at the simulation resolution."""

    states: np.ndarray        # (n_steps+1, M, 4) x, y, heading, v
    controls: np.ndarray      # (n_steps, M, 2) accel, steer
    rss: np.ndarray           # (n_steps, 4) dangerous, v_lb, v_ub, overridden
    collision_step: int
    agent_ids: tuple[int, ...]
    dt: float

    @property
    def collided(self) -> bool:
        return self.collision_step >= 0

    def ego_states(self) -> np.ndarray:
        return self.states[:, 0, :]

    def rss_violation_steps(self) -> int:
        return int(self.rss[:, 0].sum())


def run_rollout(kworld: KernelWorld, assignment: dict[int, int], lane_sched: np.ndarray,
                idm_sched: np.ndarray, start_lane_idx: int, mode: int,
                rss_override: bool, frozen: Optional[np.ndarray] = None
                ) -> ForwardTrace:
    n, m = kworld.n_steps, len(kworld.agent_ids)
    lane_idx = np.empty(m, dtype=np.int32)
    lane_idx[0] = start_lane_idx
    for row, aid in enumerate(kworld.agent_ids):
        if aid == 0:
            lane_idx[row] = start_lane_idx
        else:
            lane_idx[row] = kworld.lane_index(assignment[aid])
    out_states = np.empty((n + 1, m, 4))
    out_ctrl = np.zeros((n, m, 2))
    out_rss = np.zeros((n, 4))
    if frozen is None:
        frozen = np.zeros((1, 1, 4))
    collision = K.rollout(
        kworld.lane_x, kworld.lane_y, kworld.lane_s, kworld.lane_off,
        kworld.lane_width,
        kworld.stat_lane, kworld.stat_s0, kworld.stat_s1, kworld.stat_d0,
        kworld.stat_d1,
        kworld.st0, kworld.geom, lane_idx, kworld.idm, kworld.consider,
        lane_sched, idm_sched, start_lane_idx,
        kworld.par, mode, 1 if rss_override else 0, frozen,
        out_states, out_ctrl, out_rss, n, kworld.dt)
    return ForwardTrace(states=out_states, controls=out_ctrl, rss=out_rss,
                        collision_step=int(collision),
                        agent_ids=kworld.agent_ids, dt=kworld.dt)


# --------------------------------------------------------------------------
# conditional focused branching


def _swept_conflicts(trace: ForwardTrace, kworld: KernelWorld, cfg: Config) -> set[int]:
    """Agents whose open-loop swept footprint meets the ego's."""
    stride = max(1, int(round(cfg.planner.cfb_check_period / cfg.planner.sim_dt)))
    margin = cfg.planner.cfb_margin
    steps = trace.states[::stride]
    ego = steps[:, 0, :]
    conflicted: set[int] = set()
    ego_hl = kworld.geom[0, 0] / 2.0 + margin
    ego_hw = kworld.geom[0, 1] / 2.0 + margin
    for row in range(1, len(kworld.agent_ids)):
        other = steps[:, row, :]
        if _any_rect_overlap(ego, ego_hl, ego_hw,
                             other, kworld.geom[row, 0] / 2.0 + margin,
                             kworld.geom[row, 1] / 2.0 + margin):
            conflicted.add(kworld.agent_ids[row])
    return conflicted


def _any_rect_overlap(a: np.ndarray, a_hl: float, a_hw: float,
                      b: np.ndarray, b_hl: float, b_hw: float) -> bool:
    """Vectorized separating-axis test over paired pose rows."""
    ca, sa = np.cos(a[:, 2]), np.sin(a[:, 2])
    cb, sb = np.cos(b[:, 2]), np.sin(b[:, 2])
    dx = b[:, 0] - a[:, 0]
    dy = b[:, 1] - a[:, 1]
    hit = np.ones(len(a), dtype=bool)
    for ax, ay in ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb)):
        ra = a_hl * np.abs(ax * ca + ay * sa) + a_hw * np.abs(-ax * sa + ay * ca)
        rb = b_hl * np.abs(ax * cb + ay * sb) + b_hw * np.abs(-ax * sb + ay * cb)
        hit &= np.abs(ax * dx + ay * dy) <= ra + rb
        if not hit.any():
            return False
    return bool(hit.any())


def cfb(kworld: KernelWorld, belief: IntentionBelief, lane_sched: np.ndarray,
        idm_sched: np.ndarray, start_lane_idx: int, cfg: Config) -> list[Scenario]:
    """Critical-agent selection conditioned on one ego policy.

    An open-loop probe (no interaction) flags agents whose swept regions
    meet the ego's; their intention sets are enumerated, everyone else is
    pinned at the most likely centerline.
    """
    assignment = belief.map_assignment()
    probe = run_rollout(kworld, assignment, lane_sched, idm_sched,
                        start_lane_idx, K.MODE_OPEN_LOOP, False)
    critical = sorted(_swept_conflicts(probe, kworld, cfg))
    base = sorted(assignment.items())
    if not critical:
        return [Scenario(assignment=tuple(base), weight=1.0, critical=())]

    choice_sets = [belief.candidates[aid] for aid in critical]
    combos = []
    for combo in itertools.product(*choice_sets):
        w = 1.0
        assign = dict(assignment)
        for aid, (lane, prob) in zip(critical, combo):
            w *= prob
            assign[aid] = lane
        combos.append((w, assign))
    combos.sort(key=lambda c: (-c[0], tuple(sorted(c[1].items()))))
    if len(combos) > cfg.planner.scenario_cap:
        combos = combos[:cfg.planner.scenario_cap]
    total = sum(w for w, _ in combos)
    return [Scenario(assignment=tuple(sorted(assign.items())), weight=w / total,
                     critical=tuple(critical))
            for w, assign in combos]


# --------------------------------------------------------------------------
# costs


def _project_batch(kworld: KernelWorld, lane_idx: int, pts: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 2) points on one flattened lane."""
    lo, hi = kworld.lane_off[lane_idx], kworld.lane_off[lane_idx + 1]
    x = kworld.lane_x[lo:hi]
    y = kworld.lane_y[lo:hi]
    dx = np.diff(x)
    dy = np.diff(y)
    seg2 = dx * dx + dy * dy
    rx = pts[:, 0, None] - x[None, :-1]
    ry = pts[:, 1, None] - y[None, :-1]
    t = np.clip((rx * dx + ry * dy) / seg2, 0.0, 1.0)
    fx = x[None, :-1] + t * dx - pts[:, 0, None]
    fy = y[None, :-1] + t * dy - pts[:, 1, None]
    i = np.argmin(fx * fx + fy * fy, axis=1)
    rows = np.arange(len(pts))
    seg = np.sqrt(seg2[i])
    s = kworld.lane_s[lo + i] + t[rows, i] * seg
    d = (dx[i] * ry[rows, i] - dy[i] * rx[rows, i]) / seg
    return s, d


def ego_leader_speed(kworld: KernelWorld, states: np.ndarray, cfg: Config
                     ) -> Optional[float]:
    """Speed of the body ahead of the ego on its nearest lane, if any."""
    ego_pt = states[0:1, :2]
    best_lane, best_d, best_s = 0, math.inf, 0.0
    for li in range(len(kworld.lane_ids)):
        s, d = _project_batch(kworld, li, ego_pt)
        if abs(d[0]) < abs(best_d):
            best_lane, best_d, best_s = li, float(d[0]), float(s[0])
    consider = cfg.planner.lateral_consider_range
    lead_s, lead_v = math.inf, None
    if states.shape[0] > 1:
        s, d = _project_batch(kworld, best_lane, states[1:, :2])
        mask = (np.abs(d) <= consider) & (s > best_s)
        if mask.any():
            j = int(np.argmin(np.where(mask, s, np.inf)))
            lead_s, lead_v = float(s[j]), float(states[1 + j, 3])
    for k in range(len(kworld.stat_lane)):
        if kworld.stat_lane[k] != best_lane:
            continue
        sc = 0.5 * (kworld.stat_s0[k] + kworld.stat_s1[k])
        if best_s < sc < lead_s:
            lead_s, lead_v = sc, 0.0
    return lead_v


def efficiency_cost(trace: ForwardTrace, policy: PolicySequence,
                    kworld: KernelWorld, cfg: Config,
                    spans: Optional[list[tuple[int, int]]] = None) -> float:
    """Per-action speed mismatch terms, discounted by action index."""
    w = cfg.weights
    if spans is None:
        spans = action_step_spans(len(policy.actions), trace.rss.shape[0], cfg)
    v_pref = cfg.planner.preferred_speed
    total = 0.0
    for i, (start, end) in enumerate(spans):
        if start >= end:
            continue
        v_ego = float(trace.states[end, 0, 3])
        dv_p = abs(v_ego - v_pref)
        v_lead = ego_leader_speed(kworld, trace.states[end], cfg)
        if v_lead is None:
            dv_o = dv_l = 0.0
        else:
            dv_o = max(v_ego - v_lead, 0.0)
            dv_l = abs(v_lead - v_pref)
        total += (w.discount ** i) * (w.speed_pref * dv_p + w.overshoot * dv_o
                                      + w.lead_pref * dv_l)
    return total


def safety_cost(trace: ForwardTrace, cfg: Config,
                spans: Optional[list[tuple[int, int]]] = None) -> float:
    """Collision penalty plus exponential pressure on safe-interval violations."""
    w = cfg.weights
    n_steps = trace.rss.shape[0]
    if spans is None:
        n_actions = max(1, int(round(n_steps * cfg.planner.sim_dt
                                     / cfg.planner.action_duration)))
        spans = action_step_spans(n_actions, n_steps, cfg)
    total = w.collision if trace.collided else 0.0
    for i, (start, end) in enumerate(spans):
        sub = 0.0
        for k in range(start, min(end, n_steps)):
            if trace.rss[k, 0] == 0.0:
                continue
            v_ego = float(trace.states[k, 0, 3])
            v_clamped = min(max(v_ego, trace.rss[k, 1]), trace.rss[k, 2])
            sub += v_ego * w.rss_base * math.exp(w.rss_exp * abs(v_ego - v_clamped))
        total += (w.discount ** i) * sub
    return total


def navigation_cost(policy: PolicySequence, start_lane: int,
                    user_command: Optional[str],
                    last_maneuver: Optional[tuple[str, int]],
                    cfg: Config) -> tuple[float, bool, bool]:
    """Reward (negative cost) for matching the operator and the last decision."""
    w = cfg.weights
    outcome = policy.outcome_maneuver(start_lane)
    b_navi = False
    if user_command in ("left", "right"):
        final = policy.actions[-1]
        b_navi = (outcome[0] == "change"
                  and final.lateral == (LateralManeuver.LEFT if user_command == "left"
                                        else LateralManeuver.RIGHT))
    b_consist = last_maneuver is not None and outcome == tuple(last_maneuver)
    cost = 0.0
    if b_navi:
        cost -= w.user_command
    if b_consist:
        cost -= w.consistency
    return cost, b_navi, b_consist


# --------------------------------------------------------------------------
# evaluation pipeline


@dataclass
class ScenarioResult:
    scenario: Scenario
    trace: ForwardTrace
    cost_efficiency: float
    cost_safety: float
    cost_total: float


@dataclass
class PolicyEvaluation:
    index: int
    policy: PolicySequence
    scenarios: list[ScenarioResult]
    cost_navigation: float
    b_navi: bool
    b_consist: bool
    reward: float = 0.0
    feasible: bool = True
    backup_index: Optional[int] = None

    @property
    def clean(self) -> bool:
        return all(not s.trace.collided for s in self.scenarios)

    def weighted_safety_cost(self) -> float:
        return sum(s.scenario.weight * s.cost_safety for s in self.scenarios)


def evaluate_policy(evaluation: PolicyEvaluation, cfg: Config) -> float:
    w = cfg.weights
    total = 0.0
    for sr in evaluation.scenarios:
        f_total = (w.efficiency * sr.cost_efficiency + w.safety * sr.cost_safety
                   + w.navigation * evaluation.cost_navigation)
        sr.cost_total = f_total
        total += sr.scenario.weight * f_total
    return -total


def find_backup_index(policy: PolicySequence, policies: Sequence[PolicySequence],
                      start_lane: int) -> Optional[int]:
    """Cancellation policy: same first longitudinal style, keep-lane lateral."""
    style = policy.actions[0].longitudinal
    want_full = tuple((LateralManeuver.KEEP, style, start_lane)
                      for _ in policy.actions)
    fallback = None
    for i, cand in enumerate(policies):
        sig = tuple((a.lateral, a.longitudinal, a.target_lane) for a in cand.actions)
        if sig == want_full:
            return i
        if (cand.actions[0].same_maneuver(policy.actions[0])
                and all(a.target_lane == start_lane and a.longitudinal == style
                        for a in cand.actions[1:])
                and len(cand.actions) > 1):
            fallback = i
    return fallback


def backup_gate(evaluations: list[PolicyEvaluation], start_lane: int,
                cfg: Config) -> None:
    """Mark lane-change policies infeasible unless both the policy and its
    cancellation produced collision-free, acceptably-safe traces."""
    limit = cfg.planner.gate_safety_cost_limit
    policies = [e.policy for e in evaluations]

    def likely(e: PolicyEvaluation):
        return max(e.scenarios, key=lambda s: s.scenario.weight,
                   default=None)

    def clean_likely(e: PolicyEvaluation) -> bool:
        """The policy's most likely realization; branch risk is priced by
        the cost, not vetoed here."""
        sr = likely(e)
        if sr is None:
            return True
        return not sr.trace.collided and sr.cost_safety <= limit

    def clean_worst(e: PolicyEvaluation) -> bool:
        """The safety net must hold under every considered scenario."""
        if not e.clean:
            return False
        worst = max((s.cost_safety for s in e.scenarios), default=0.0)
        return worst <= limit

    for e in evaluations:
        if e.policy.outcome_lane() == start_lane:
            # keeping the lane is the resort maneuver: gated on collisions
            # only, never on elective risk
            sr = likely(e)
            e.backup_index = e.index
            e.feasible = sr is None or not sr.trace.collided
        else:
            bi = find_backup_index(e.policy, policies, start_lane)
            e.backup_index = bi
            e.feasible = (bi is not None and clean_likely(e)
                          and clean_worst(evaluations[bi]))
    if not any(e.feasible for e in evaluations):
        raise PlanningFailed("no policy passed the safety gate")


def select_policy(evaluations: list[PolicyEvaluation], start_lane: int
                  ) -> PolicyEvaluation:
    feasible = [e for e in evaluations if e.feasible]
    if not feasible:
        raise PlanningFailed("no feasible policy")

    def key(e: PolicyEvaluation):
        keeps = e.policy.outcome_lane() == start_lane
        return (-e.reward, 0 if keeps else 1, e.index)

    return min(feasible, key=key)


# --------------------------------------------------------------------------
# decision assembly


@dataclass
class Decision:
    """Time-stamped state sequences for all agents over the horizon."""

    t0: float
    dt: float
    agent_ids: tuple[int, ...]
    states: np.ndarray            # (n_steps+1, M, 4)
    policy_index: int
    policy: PolicySequence
    scenario_index: int
    backup_index: Optional[int]
    start_lane: int
    target_lane: int

    def ego_frames(self) -> np.ndarray:
        return self.states[:, 0, :]

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])


@dataclass
class PlanResult:
    decision: Decision
    evaluations: list[PolicyEvaluation]
    ongoing_next: SemanticAction
    ongoing_successor: SemanticAction
    belief: IntentionBelief
    start_lane: int
    chosen_maneuver: tuple[str, int]
    backup_decision: Optional[Decision] = None

    @property
    def chosen(self) -> PolicyEvaluation:
        return self.evaluations[self.decision.policy_index]


def normalize_ongoing(snapshot: WorldSnapshot, current_lane: LaneGeometry,
                      ongoing: Optional[SemanticAction]) -> SemanticAction:
    """Re-express the carried-over action relative to the current lane."""
    keep_mod = SemanticAction(LateralManeuver.KEEP, LongitudinalStyle.MODERATE,
                              current_lane.id)
    if ongoing is None:
        return keep_mod
    lane_ids = {lane.id for lane in snapshot.lanes}
    if ongoing.target_lane not in lane_ids:
        return keep_mod
    if ongoing.target_lane == current_lane.id:
        return SemanticAction(LateralManeuver.KEEP, ongoing.longitudinal,
                              current_lane.id)
    if ongoing.target_lane == current_lane.left_neighbor and current_lane.change_left_allowed:
        return SemanticAction(LateralManeuver.LEFT, ongoing.longitudinal,
                              ongoing.target_lane)
    if ongoing.target_lane == current_lane.right_neighbor and current_lane.change_right_allowed:
        return SemanticAction(LateralManeuver.RIGHT, ongoing.longitudinal,
                              ongoing.target_lane)
    return keep_mod


def plan(snapshot: WorldSnapshot, cfg: Config,
         user_command: Optional[str] = None,
         ongoing: Optional[SemanticAction] = None,
         last_maneuver: Optional[tuple[str, int]] = None,
         variant: str = "interactive",
         ongoing_remaining: Optional[float] = None) -> PlanResult:
    """One behavior-layer cycle.  Raises PlanningFailed when gated out.

    `ongoing_remaining` is the unexecuted part of the ongoing action; the
    first schedule block shrinks accordingly so a committed maneuver
    progresses across replans instead of restarting every cycle.
    """
    ego = snapshot.agents[0]
    current = min(snapshot.lanes, key=lambda ln: abs(to_frenet(ln, ego).d))
    ongoing = normalize_ongoing(snapshot, current, ongoing)
    actions = available_actions(snapshot, current)
    tree = update_dcp_tree(actions, ongoing, cfg.planner.tree_height)
    policies = extract_policy_sequences(tree)
    belief = estimate_intentions(snapshot, cfg)
    kworld = build_kernel_world(snapshot, cfg)
    start_lane_idx = kworld.lane_index(current.id)
    rss_override = variant != "no_safety"

    frozen = None
    if variant == "decoupled":
        zero_lane = np.zeros(kworld.n_steps, dtype=np.int32)
        zero_idm = np.tile(kworld.idm[0], (kworld.n_steps, 1))
        prediction = run_rollout(kworld, belief.map_assignment(), zero_lane,
                                 zero_idm, start_lane_idx, K.MODE_NO_EGO, False)
        frozen = prediction.states

    evaluations: list[PolicyEvaluation] = []
    for idx, policy in enumerate(policies):
        lane_sched, idm_sched, spans = policy_schedule(policy, kworld, cfg,
                                                       ongoing_remaining)
        if variant == "decoupled":
            scenarios = [Scenario(assignment=tuple(sorted(belief.map_assignment().items())),
                                  weight=1.0, critical=())]
        else:
            scenarios = cfb(kworld, belief, lane_sched, idm_sched, start_lane_idx, cfg)
        results = []
        for sc in scenarios:
            if variant == "decoupled":
                trace = run_rollout(kworld, dict(sc.assignment), lane_sched, idm_sched,
                                    start_lane_idx, K.MODE_EGO_VS_FROZEN,
                                    rss_override, frozen)
            else:
                trace = run_rollout(kworld, dict(sc.assignment), lane_sched, idm_sched,
                                    start_lane_idx, K.MODE_CLOSED_LOOP, rss_override)
            results.append(ScenarioResult(
                scenario=sc, trace=trace,
                cost_efficiency=efficiency_cost(trace, policy, kworld, cfg, spans),
                cost_safety=safety_cost(trace, cfg, spans),
                cost_total=0.0))
        nav, b_navi, b_consist = navigation_cost(policy, current.id, user_command,
                                                 last_maneuver, cfg)
        ev = PolicyEvaluation(index=idx, policy=policy, scenarios=results,
                              cost_navigation=nav, b_navi=b_navi, b_consist=b_consist)
        ev.reward = evaluate_policy(ev, cfg)
        evaluations.append(ev)

    if variant == "no_safety":
        for e in evaluations:
            e.feasible = True
            e.backup_index = e.index
    else:
        backup_gate(evaluations, current.id, cfg)

    winner = select_policy(evaluations, current.id)
    best_sr = max(enumerate(winner.scenarios),
                  key=lambda p: (p[1].scenario.weight, -p[0]))
    decision = Decision(
        t0=snapshot.timestamp, dt=kworld.dt, agent_ids=kworld.agent_ids,
        states=best_sr[1].trace.states, policy_index=winner.index,
        policy=winner.policy, scenario_index=best_sr[0],
        backup_index=winner.backup_index, start_lane=current.id,
        target_lane=winner.policy.outcome_lane())

    backup_decision = None
    if winner.backup_index is not None and winner.backup_index != winner.index:
        bev = evaluations[winner.backup_index]
        bsr = max(enumerate(bev.scenarios), key=lambda p: (p[1].scenario.weight, -p[0]))
        backup_decision = Decision(
            t0=snapshot.timestamp, dt=kworld.dt, agent_ids=kworld.agent_ids,
            states=bsr[1].trace.states, policy_index=bev.index, policy=bev.policy,
            scenario_index=bsr[0], backup_index=bev.backup_index,
            start_lane=current.id, target_lane=bev.policy.outcome_lane())

    successor = (winner.policy.actions[1] if len(winner.policy.actions) > 1
                 else winner.policy.actions[0])
    return PlanResult(
        decision=decision, evaluations=evaluations,
        ongoing_next=winner.policy.actions[0],
        ongoing_successor=successor, belief=belief,
        start_lane=current.id,
        chosen_maneuver=winner.policy.outcome_maneuver(current.id),
        backup_decision=backup_decision)

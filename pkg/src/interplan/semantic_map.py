"""Lane geometry, Frenet-frame conversion and neighborhood queries.

The world is described by an immutable per-cycle :class:`WorldSnapshot`.
Centerlines are piecewise-linear polylines; arclength lookups use binary
search over the precomputed cumulative lengths.  The lateral coordinate d
is positive to the left of the travel direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ProjectionOutOfDomain, SOutOfRange


@dataclass(frozen=True)
class LaneGeometry:
    """One lane: centerline polyline plus topology flags."""

    id: int
    centerline: np.ndarray          # (N, 2) meters, N >= 2
    width: float
    left_neighbor: Optional[int] = None
    right_neighbor: Optional[int] = None
    change_left_allowed: bool = False
    change_right_allowed: bool = False
    # derived, filled in __post_init__
    seg_len: np.ndarray = field(init=False, repr=False)
    cum_s: np.ndarray = field(init=False, repr=False)
    headings: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ConfigError("centerline must be an (N>=2, 2) array")
        if self.width <= 0:
            raise ConfigError("lane width must be positive")
        diffs = np.diff(pts, axis=0)
        seg_len = np.hypot(diffs[:, 0], diffs[:, 1])
        if np.any(seg_len <= 0):
            raise ConfigError("centerline points must strictly increase in arclength")
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "seg_len", seg_len)
        object.__setattr__(self, "cum_s", np.concatenate(([0.0], np.cumsum(seg_len))))
        object.__setattr__(self, "headings", np.arctan2(diffs[:, 1], diffs[:, 0]))

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Return (x, y, heading) of the centerline at arclength s."""
        if s < -1e-9 or s > self.length + 1e-9:
            raise SOutOfRange(f"s={s} outside [0, {self.length}]")
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(max(i, 0), len(self.seg_len) - 1)
        t = (s - self.cum_s[i]) / self.seg_len[i]
        p = self.centerline[i] + t * (self.centerline[i + 1] - self.centerline[i])
        return float(p[0]), float(p[1]), float(self.headings[i])


def straight_lane(lane_id: int, y: float, length: float, width: float,
                  x0: float = 0.0, **topology) -> LaneGeometry:
    """Convenience constructor for a straight lane along +x at offset y."""
    pts = np.array([[x0, y], [x0 + length, y]])
    return LaneGeometry(id=lane_id, centerline=pts, width=width, **topology)


@dataclass(frozen=True)
class VehicleState:
    """Pose and motion of one agent at one instant."""

    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    steer: float = 0.0
    length: float = 4.6
    width: float = 1.9
    wheelbase: float = 2.85

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ConfigError("speed must be non-negative (no reverse)")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def corners(self, margin: float = 0.0) -> np.ndarray:
        """Body rectangle corners (4, 2), counterclockwise."""
        hl = self.length / 2.0 + margin
        hw = self.width / 2.0 + margin
        c, s = math.cos(self.heading), math.sin(self.heading)
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])


@dataclass(frozen=True)
class FrenetState:
    lane_id: int
    s: float
    d: float
    vs: float = 0.0
    vd: float = 0.0


@dataclass(frozen=True)
class StaticObstacle:
    """Axis-aligned box in the Frenet frame of one lane."""

    lane_id: int
    s_min: float
    s_max: float
    d_min: float
    d_max: float


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable world state published once per planning cycle."""

    timestamp: float
    lanes: tuple[LaneGeometry, ...]
    agents: dict[int, VehicleState]      # id 0 reserved for the ego
    static_obstacles: tuple[StaticObstacle, ...] = ()

    def __post_init__(self) -> None:
        ids = [lane.id for lane in self.lanes]
        if len(ids) != len(set(ids)):
            raise ConfigError("lane ids must be unique")
        by_id = {lane.id: lane for lane in self.lanes}
        for lane in self.lanes:
            ln = lane.left_neighbor
            if ln is not None and by_id[ln].right_neighbor != lane.id:
                raise ConfigError(f"asymmetric neighbor link {lane.id}<->{ln}")
            rn = lane.right_neighbor
            if rn is not None and by_id[rn].left_neighbor != lane.id:
                raise ConfigError(f"asymmetric neighbor link {lane.id}<->{rn}")

    def lane(self, lane_id: int) -> LaneGeometry:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(f"no lane {lane_id}")

    def with_agents(self, agents: dict[int, VehicleState], timestamp: float) -> "WorldSnapshot":
        return replace(self, agents=dict(agents), timestamp=timestamp)


def _project_point(lane: LaneGeometry, px: float, py: float) -> tuple[float, float, int, float]:
    """Closest-point projection onto the polyline.

    Returns (s, d, segment index, t in segment).  Raises when the foot
    point lies beyond either end of the polyline.
    """
    pts = lane.centerline
    dx = pts[1:, 0] - pts[:-1, 0]
    dy = pts[1:, 1] - pts[:-1, 1]
    rx = px - pts[:-1, 0]
    ry = py - pts[:-1, 1]
    seg2 = lane.seg_len ** 2
    t = (rx * dx + ry * dy) / seg2
    tc = np.clip(t, 0.0, 1.0)
    fx = pts[:-1, 0] + tc * dx - px
    fy = pts[:-1, 1] + tc * dy - py
    dist2 = fx * fx + fy * fy
    i = int(np.argmin(dist2))
    if i == 0 and t[0] < -1e-12:
        raise ProjectionOutOfDomain("foot point before the start of the centerline")
    if i == len(t) - 1 and t[i] > 1.0 + 1e-12:
        raise ProjectionOutOfDomain("foot point past the end of the centerline")
    ti = float(tc[i])
    s = float(lane.cum_s[i] + ti * lane.seg_len[i])
    # signed offset: positive to the left of the segment direction
    d = float((dx[i] * ry[i] - dy[i] * rx[i]) / lane.seg_len[i])
    return s, d, i, ti


def project_points(lane: LaneGeometry, pts: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closest-point projection of (N, 2) points: returns (s, d).

    End overruns clamp to the polyline ends (no domain error); meant for
    bulk queries where out-of-domain points are filtered by the caller.
    """
    pts = np.asarray(pts, dtype=float)
    cl = lane.centerline
    dx = cl[1:, 0] - cl[:-1, 0]
    dy = cl[1:, 1] - cl[:-1, 1]
    seg2 = lane.seg_len ** 2
    rx = pts[:, 0, None] - cl[None, :-1, 0]
    ry = pts[:, 1, None] - cl[None, :-1, 1]
    t = np.clip((rx * dx + ry * dy) / seg2, 0.0, 1.0)
    fx = cl[None, :-1, 0] + t * dx - pts[:, 0, None]
    fy = cl[None, :-1, 1] + t * dy - pts[:, 1, None]
    dist2 = fx * fx + fy * fy
    i = np.argmin(dist2, axis=1)
    rows = np.arange(len(pts))
    ti = t[rows, i]
    s = lane.cum_s[i] + ti * lane.seg_len[i]
    d = (dx[i] * ry[rows, i] - dy[i] * rx[rows, i]) / lane.seg_len[i]
    return s, d


def to_frenet(lane: LaneGeometry, state: VehicleState) -> FrenetState:
    """Project a vehicle state into the lane's curvilinear frame."""
    s, d, i, _ = _project_point(lane, state.x, state.y)
    psi = float(lane.headings[i])
    rel = state.heading - psi
    return FrenetState(
        lane_id=lane.id,
        s=s,
        d=d,
        vs=state.speed * math.cos(rel),
        vd=state.speed * math.sin(rel),
    )


def from_frenet(lane: LaneGeometry, fs: FrenetState) -> tuple[np.ndarray, float]:
    """Invert :func:`to_frenet`: returns (position, heading)."""
    if fs.s < -1e-9 or fs.s > lane.length + 1e-9:
        raise SOutOfRange(f"s={fs.s} outside [0, {lane.length}]")
    x, y, psi = lane.point_at(fs.s)
    nx, ny = -math.sin(psi), math.cos(psi)
    pos = np.array([x + fs.d * nx, y + fs.d * ny])
    if abs(fs.vs) > 1e-12 or abs(fs.vd) > 1e-12:
        heading = psi + math.atan2(fs.vd, fs.vs)
    else:
        heading = psi
    return pos, heading


@dataclass(frozen=True)
class AgentOnLane:
    agent_id: int
    s: float
    d: float
    speed_s: float


@dataclass(frozen=True)
class GapQuery:
    """Leading vehicle on a lane plus new leader/follower per neighbor."""

    leader: Optional[AgentOnLane]
    neighbors: dict[int, tuple[Optional[AgentOnLane], Optional[AgentOnLane]]]
    # lane id -> (new leader C_f, new follower C_r)


def agents_on_lane(snapshot: WorldSnapshot, lane: LaneGeometry,
                   exclude: tuple[int, ...] = (),
                   half_width_scale: float = 1.0) -> list[AgentOnLane]:
    """Agents whose centroid projects within the lane's half width."""
    found = []
    limit = lane.width / 2.0 * half_width_scale
    for aid, st in snapshot.agents.items():
        if aid in exclude:
            continue
        try:
            fs = to_frenet(lane, st)
        except ProjectionOutOfDomain:
            continue
        if abs(fs.d) <= limit:
            found.append(AgentOnLane(aid, fs.s, fs.d, fs.vs))
    found.sort(key=lambda a: (a.s, a.agent_id))
    return found


def _split_at(members: list[AgentOnLane], s_query: float
              ) -> tuple[Optional[AgentOnLane], Optional[AgentOnLane]]:
    """(first agent with s > s_query, last agent with s <= s_query)."""
    ahead = None
    behind = None
    for a in members:
        if a.s > s_query:
            if ahead is None or a.s < ahead.s:
                ahead = a
        elif behind is None or a.s > behind.s:
            behind = a
    return ahead, behind


def neighbors_and_gaps(snapshot: WorldSnapshot, lane: LaneGeometry,
                       s_query: float, exclude: tuple[int, ...] = ()) -> GapQuery:
    """Current leader plus the (new leader, new follower) pair per neighbor lane."""
    leader, _ = _split_at(agents_on_lane(snapshot, lane, exclude), s_query)
    neighbors: dict[int, tuple[Optional[AgentOnLane], Optional[AgentOnLane]]] = {}
    for nid in (lane.left_neighbor, lane.right_neighbor):
        if nid is None:
            continue
        nlane = snapshot.lane(nid)
        members = agents_on_lane(snapshot, nlane, exclude)
        neighbors[nid] = _split_at(members, s_query)
    return GapQuery(leader=leader, neighbors=neighbors)


def lateral_offset_between(lane_from: LaneGeometry, lane_to: LaneGeometry,
                           s_on_from: float) -> float:
    """Signed d of lane_to's centerline in lane_from's frame near s_on_from."""
    x, y, _ = lane_from.point_at(min(max(s_on_from, 0.0), lane_from.length))
    probe = VehicleState(x=x, y=y, heading=0.0, speed=0.0)
    fs = to_frenet(lane_to, probe)
    # d of the from-point in to-frame flips sign relative to the to-centerline
    return -fs.d


def rectangles_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals (4, 2)."""
    for rect in (a, b):
        for i in range(4):
            ex = rect[(i + 1) % 4, 0] - rect[i, 0]
            ey = rect[(i + 1) % 4, 1] - rect[i, 1]
            ax, ay = -ey, ex
            pa = a @ (ax, ay)
            pb = b @ (ax, ay)
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True

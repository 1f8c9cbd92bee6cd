import math

import numpy as np
import pytest

from interplan.config import default_config
from interplan.semantic_map import LaneGeometry, VehicleState, WorldSnapshot, straight_lane


@pytest.fixture
def cfg():
    return default_config()


@pytest.fixture
def two_lane_world():
    """Two straight parallel lanes: 0 on the left (y=3.5), 1 on the right (y=0)."""
    left = straight_lane(0, 3.5, 500.0, 3.5, right_neighbor=1, change_right_allowed=True)
    right = straight_lane(1, 0.0, 500.0, 3.5, left_neighbor=0, change_left_allowed=True)
    return left, right


def arc_lane(lane_id: int, radius: float, span: float = math.pi / 2,
             n: int = 10001, width: float = 3.5, ccw: bool = True) -> LaneGeometry:
    """Circular-arc lane starting at the origin heading +x.

    For ccw (left-curving) arcs the center sits at (0, radius).
    """
    t = np.linspace(0.0, span, n)
    if ccw:
        pts = np.stack([radius * np.sin(t), radius * (1.0 - np.cos(t))], axis=1)
    else:
        pts = np.stack([radius * np.sin(t), -radius * (1.0 - np.cos(t))], axis=1)
    return LaneGeometry(id=lane_id, centerline=pts, width=width)


def make_snapshot(lanes, agents, statics=(), t=0.0) -> WorldSnapshot:
    return WorldSnapshot(timestamp=t, lanes=tuple(lanes), agents=dict(agents),
                         static_obstacles=tuple(statics))


def vehicle(x, y, heading=0.0, speed=0.0, **kw) -> VehicleState:
    return VehicleState(x=x, y=y, heading=heading, speed=speed, **kw)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interplan.errors import ProjectionOutOfDomain, SOutOfRange
from interplan.semantic_map import (FrenetState, VehicleState, from_frenet,
                                    neighbors_and_gaps, straight_lane, to_frenet)

from conftest import arc_lane, make_snapshot, vehicle


class TestToFrenet:
    def test_axis_aligned_lane(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        fs = to_frenet(lane, vehicle(10.0, 0.5, heading=0.0, speed=5.0))
        assert fs.s == pytest.approx(10.0, abs=1e-12)
        assert fs.d == pytest.approx(0.5, abs=1e-12)
        assert fs.vs == pytest.approx(5.0, abs=1e-12)
        assert fs.vd == pytest.approx(0.0, abs=1e-12)

    def test_pure_lateral_motion(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        fs = to_frenet(lane, vehicle(10.0, 0.5, heading=math.pi / 2, speed=2.0))
        assert fs.vs == pytest.approx(0.0, abs=1e-12)
        assert fs.vd == pytest.approx(2.0, abs=1e-12)

    def test_quarter_circle_arc(self):
        # point on the arc at 45 degrees: s = R * pi/4, d = 0
        lane = arc_lane(0, 50.0)
        ang = math.pi / 4
        x = 50.0 * math.sin(ang)
        y = 50.0 * (1.0 - math.cos(ang))
        fs = to_frenet(lane, vehicle(x, y, heading=ang, speed=3.0))
        assert fs.s == pytest.approx(50.0 * math.pi / 4, abs=1e-6)
        assert abs(fs.d) < 1e-6

    def test_projection_out_of_domain(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        with pytest.raises(ProjectionOutOfDomain):
            to_frenet(lane, vehicle(-5.0, 1.0))
        with pytest.raises(ProjectionOutOfDomain):
            to_frenet(lane, vehicle(105.0, 1.0))


class TestFromFrenet:
    def test_straight_identity(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        pos, heading = from_frenet(lane, FrenetState(0, 3.0, 0.0))
        assert pos == pytest.approx([3.0, 0.0], abs=1e-12)
        assert heading == pytest.approx(0.0)

    def test_straight_negative_offset(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        pos, _ = from_frenet(lane, FrenetState(0, 3.0, -1.5))
        assert pos == pytest.approx([3.0, -1.5], abs=1e-12)

    def test_arc_offset_toward_center(self):
        # left-curving arc: d = +1 moves toward the center, radius 49
        lane = arc_lane(0, 50.0)
        pos, _ = from_frenet(lane, FrenetState(0, 50.0 * math.pi / 4, 1.0))
        center = np.array([0.0, 50.0])
        assert np.hypot(*(pos - center)) == pytest.approx(49.0, abs=1e-6)

    def test_s_out_of_range(self):
        lane = straight_lane(0, 0.0, 100.0, 3.5)
        with pytest.raises(SOutOfRange):
            from_frenet(lane, FrenetState(0, 150.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(
    s=st.floats(1.0, 99.0),
    d=st.floats(-1.7, 1.7),
    rel=st.floats(-1.2, 1.2),
    speed=st.floats(0.1, 30.0),
    radius=st.sampled_from([50.0, 120.0, 400.0]),
    ccw=st.booleans(),
)
def test_frenet_round_trip(s, d, rel, speed, radius, ccw):
    lane = arc_lane(0, radius, span=100.0 / radius + 0.3, ccw=ccw)
    pos, psi = from_frenet(lane, FrenetState(0, s, d))
    state = VehicleState(x=float(pos[0]), y=float(pos[1]), heading=psi + rel, speed=speed)
    fs = to_frenet(lane, state)
    back, heading = from_frenet(lane, fs)
    assert np.hypot(*(back - np.array([state.x, state.y]))) < 1e-6
    # heading recovery is limited by the piecewise-constant tangent
    assert abs(math.remainder(heading - state.heading, math.tau)) < 1e-3


class TestGaps:
    def test_empty_lane(self, two_lane_world):
        left, right = two_lane_world
        snap = make_snapshot([left, right], {0: vehicle(40.0, 0.0, speed=10.0)})
        q = neighbors_and_gaps(snap, right, 40.0, exclude=(0,))
        assert q.leader is None
        assert q.neighbors[0] == (None, None)

    def test_leader_and_gap_ordering(self, two_lane_world):
        left, right = two_lane_world
        agents = {
            0: vehicle(40.0, 0.0, speed=10.0),
            1: vehicle(20.0, 3.5, speed=9.0),
            2: vehicle(60.0, 3.5, speed=9.0),
        }
        snap = make_snapshot([left, right], agents)
        q = neighbors_and_gaps(snap, right, 40.0, exclude=(0,))
        ahead, behind = q.neighbors[0]
        assert ahead.agent_id == 2 and ahead.s == pytest.approx(60.0)
        assert behind.agent_id == 1 and behind.s == pytest.approx(20.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(1.0, 499.0), st.sampled_from([0.0, 3.5]),
                              st.floats(0.0, 20.0)), min_size=1, max_size=5),
           st.floats(5.0, 495.0))
    def test_matches_brute_force(self, placements, s_query):
        from hypothesis import assume
        xs = [x for x, _, _ in placements]
        assume(all(abs(x - s_query) > 1e-6 for x in xs))
        assume(len(set(xs)) == len(xs))
        left = straight_lane(0, 3.5, 500.0, 3.5, right_neighbor=1, change_right_allowed=True)
        right = straight_lane(1, 0.0, 500.0, 3.5, left_neighbor=0, change_left_allowed=True)
        agents = {i + 1: vehicle(x, y, speed=v) for i, (x, y, v) in enumerate(placements)}
        snap = make_snapshot([left, right], agents)
        q = neighbors_and_gaps(snap, right, s_query)

        # oracle: exhaustive scan over the raw placements
        on_right = sorted((x, i + 1) for i, (x, y, v) in enumerate(placements) if y == 0.0)
        ahead_right = [(x, i) for x, i in on_right if x > s_query]
        expected_leader = min(ahead_right) if ahead_right else None
        if expected_leader is None:
            assert q.leader is None
        else:
            assert (q.leader.s, q.leader.agent_id) == pytest.approx(expected_leader)

        on_left = sorted((x, i + 1) for i, (x, y, v) in enumerate(placements) if y == 3.5)
        ahead = [(x, i) for x, i in on_left if x > s_query]
        behind = [(x, i) for x, i in on_left if x <= s_query]
        got_ahead, got_behind = q.neighbors[0]
        assert (got_ahead is None) == (not ahead)
        assert (got_behind is None) == (not behind)
        if ahead:
            assert (got_ahead.s, got_ahead.agent_id) == pytest.approx(min(ahead))
        if behind:
            assert (got_behind.s, got_behind.agent_id) == pytest.approx(max(behind))

    def test_snapshot_queries_are_stable(self, two_lane_world):
        left, right = two_lane_world
        agents = {0: vehicle(40.0, 0.0), 1: vehicle(20.0, 3.5), 2: vehicle(60.0, 3.5)}
        snap = make_snapshot([left, right], agents)
        first = neighbors_and_gaps(snap, right, 40.0)
        for _ in range(3):
            neighbors_and_gaps(snap, left, 10.0)
            again = neighbors_and_gaps(snap, right, 40.0)
            assert again == first

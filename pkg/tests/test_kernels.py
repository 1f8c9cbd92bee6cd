"""Compiled kernel vs pure-Python twin: identical trajectories, same flags."""

import numpy as np
import pytest

from interplan import behavior as bh
from interplan._kernels import _fallback
from interplan.actions import LateralManeuver, LongitudinalStyle, SemanticAction
from interplan.semantic_map import StaticObstacle, straight_lane

from conftest import make_snapshot, vehicle

try:
    from interplan._kernels import _core
    HAVE_CORE = hasattr(_core, "rollout")
except ImportError:
    HAVE_CORE = False

pytestmark = pytest.mark.skipif(not HAVE_CORE, reason="compiled kernel unavailable")


def _snap(agents, statics=()):
    left = straight_lane(0, 3.5, 600.0, 3.5, right_neighbor=1, change_right_allowed=True)
    right = straight_lane(1, 0.0, 600.0, 3.5, left_neighbor=0, change_left_allowed=True)
    return make_snapshot([left, right], agents, statics)


def _run(module, kworld, assignment, policy, cfg, mode, override, frozen=None):
    lane_sched, idm_sched, _spans = bh.policy_schedule(policy, kworld, cfg)
    n, m = kworld.n_steps, len(kworld.agent_ids)
    lane_idx = np.empty(m, dtype=np.int32)
    start = kworld.lane_index(1)
    for row, aid in enumerate(kworld.agent_ids):
        lane_idx[row] = start if aid == 0 else kworld.lane_index(assignment[aid])
    out_states = np.empty((n + 1, m, 4))
    out_ctrl = np.zeros((n, m, 2))
    out_rss = np.zeros((n, 4))
    if frozen is None:
        frozen = np.zeros((1, 1, 4))
    col = module.rollout(
        kworld.lane_x, kworld.lane_y, kworld.lane_s, kworld.lane_off,
        kworld.lane_width, kworld.stat_lane, kworld.stat_s0, kworld.stat_s1,
        kworld.stat_d0, kworld.stat_d1, kworld.st0, kworld.geom, lane_idx,
        kworld.idm, kworld.consider, lane_sched, idm_sched, start,
        kworld.par, mode, 1 if override else 0, frozen,
        out_states, out_ctrl, out_rss, n, kworld.dt)
    return col, out_states, out_ctrl, out_rss


SCENARIOS = {
    "cruise": ({0: vehicle(50, 0, speed=12)}, ()),
    "merge_gap": ({0: vehicle(60, 0, speed=10),
                   1: vehicle(40, 3.5, speed=10),
                   2: vehicle(78, 3.5, speed=10)}, ()),
    "dense_queue": ({0: vehicle(60, 0, speed=10),
                     1: vehicle(40, 3.5, speed=9),
                     2: vehicle(56, 3.5, speed=10),
                     3: vehicle(72, 3.5, speed=11),
                     4: vehicle(90, 3.5, speed=10)},
                    (StaticObstacle(1, 160.0, 164.6, -0.95, 0.95),)),
    "blocked": ({0: vehicle(50, 0, speed=16)},
                (StaticObstacle(1, 90.0, 94.6, -0.95, 0.95),)),
}


@pytest.mark.parametrize("name", sorted(SCENARIOS))
@pytest.mark.parametrize("mode,override", [(0, True), (0, False), (1, False), (3, False)])
def test_backends_agree(cfg, name, mode, override):
    agents, statics = SCENARIOS[name]
    snap = _snap(agents, statics)
    kworld = bh.build_kernel_world(snap, cfg)
    assignment = {aid: 0 for aid in agents if aid != 0}
    policy = bh.PolicySequence(tuple(
        [SemanticAction(LateralManeuver.LEFT, LongitudinalStyle.MODERATE, 0)] * 5))
    res_c = _run(_core, kworld, assignment, policy, cfg, mode, override)
    res_p = _run(_fallback, kworld, assignment, policy, cfg, mode, override)
    assert res_c[0] == res_p[0]
    np.testing.assert_allclose(res_c[1], res_p[1], rtol=0, atol=1e-12)
    np.testing.assert_allclose(res_c[2], res_p[2], rtol=0, atol=1e-12)
    np.testing.assert_allclose(res_c[3], res_p[3], rtol=0, atol=1e-12)


def test_frozen_mode_agrees(cfg):
    agents, statics = SCENARIOS["dense_queue"]
    snap = _snap(agents, statics)
    kworld = bh.build_kernel_world(snap, cfg)
    assignment = {aid: 0 for aid in agents if aid != 0}
    policy = bh.PolicySequence(tuple(
        [SemanticAction(LateralManeuver.LEFT, LongitudinalStyle.AGGRESSIVE, 0)] * 5))
    _, frozen, _, _ = _run(_fallback, kworld, assignment, policy, cfg, 1, False)
    res_c = _run(_core, kworld, assignment, policy, cfg, 2, True, frozen)
    res_p = _run(_fallback, kworld, assignment, policy, cfg, 2, True, frozen)
    assert res_c[0] == res_p[0]
    np.testing.assert_allclose(res_c[1], res_p[1], rtol=0, atol=1e-12)
    np.testing.assert_allclose(res_c[3], res_p[3], rtol=0, atol=1e-12)


def test_compiled_is_faster():
    # sanity check on the point of shipping a compiled kernel at all
    import time
    from interplan.config import default_config
    cfg = default_config()
    agents = {0: vehicle(60, 0, speed=10)}
    agents.update({i: vehicle(20.0 + 14.0 * i, 3.5, speed=10) for i in range(1, 11)})
    snap = _snap(agents)
    kworld = bh.build_kernel_world(snap, cfg)
    assignment = {aid: 0 for aid in agents if aid != 0}
    policy = bh.PolicySequence(tuple(
        [SemanticAction(LateralManeuver.LEFT, LongitudinalStyle.MODERATE, 0)] * 5))

    def bench(module, reps):
        t0 = time.perf_counter()
        for _ in range(reps):
            _run(module, kworld, assignment, policy, cfg, 0, True)
        return (time.perf_counter() - t0) / reps

    t_py = bench(_fallback, 3)
    t_c = bench(_core, 20)
    assert t_c < t_py  # typically 100x+, but stay conservative under load

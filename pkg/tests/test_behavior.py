import itertools

import numpy as np
import pytest

from interplan import behavior as bh
from interplan.actions import LateralManeuver, LongitudinalStyle, SemanticAction
from interplan.config import default_config, with_overrides
from interplan.errors import PlanningFailed
from interplan.semantic_map import StaticObstacle, straight_lane, to_frenet

from conftest import make_snapshot, vehicle

KEEP, LEFT, RIGHT = LateralManeuver.KEEP, LateralManeuver.LEFT, LateralManeuver.RIGHT
AGG, MOD, CON = (LongitudinalStyle.AGGRESSIVE, LongitudinalStyle.MODERATE,
                 LongitudinalStyle.CONSERVATIVE)


def make_actions(n_lat):
    lats = [(KEEP, 1), (LEFT, 0), (RIGHT, 2)][:n_lat]
    return [SemanticAction(lat, style, lane)
            for lat, lane in lats for style in (AGG, MOD, CON)]


class TestDcpTree:
    @pytest.mark.parametrize("n_actions,height", list(itertools.product([3, 6, 9], range(2, 7))))
    def test_leaf_count_law(self, n_actions, height):
        actions = make_actions(n_actions // 3)
        tree = bh.update_dcp_tree(actions, actions[0], height)
        assert tree.leaf_count() == (n_actions - 1) * (height - 1) + 1

    def test_degenerate_height(self):
        actions = make_actions(3)
        tree = bh.update_dcp_tree(actions, actions[1], 1)
        policies = bh.extract_policy_sequences(tree)
        assert len(policies) == 1
        assert policies[0].actions == (actions[1],)

    def test_sequences_match_leaves_and_start_at_root(self):
        actions = make_actions(3)
        tree = bh.update_dcp_tree(actions, actions[4], 5)
        policies = bh.extract_policy_sequences(tree)
        assert len(policies) == (9 - 1) * 4 + 1
        assert all(p.actions[0].same_maneuver(actions[4]) for p in policies)

    def test_at_most_one_change(self):
        actions = make_actions(2)
        tree = bh.update_dcp_tree(actions, actions[0], 5)
        for p in bh.extract_policy_sequences(tree):
            assert p.change_count() <= 1

    def test_exhaustive_path_set(self):
        # oracle: all sequences of the form a0^k b^(h-k)
        actions = make_actions(1)
        h = 4
        tree = bh.update_dcp_tree(actions, actions[2], h)
        got = {tuple((a.lateral, a.longitudinal, a.target_lane) for a in p.actions)
               for p in bh.extract_policy_sequences(tree)}
        a0 = actions[2]
        expected = set()
        for k in range(1, h + 1):
            if k == h:
                expected.add(tuple((a0.lateral, a0.longitudinal, a0.target_lane)
                                   for _ in range(h)))
            else:
                for b in actions:
                    if b.same_maneuver(a0):
                        continue
                    seq = [a0] * k + [b] * (h - k)
                    expected.add(tuple((a.lateral, a.longitudinal, a.target_lane)
                                       for a in seq))
        assert got == expected

    def test_missing_ongoing_falls_back(self):
        actions = make_actions(1)  # keep-lane only
        ghost = SemanticAction(LEFT, AGG, 0)
        tree = bh.update_dcp_tree(actions, ghost, 5)
        assert tree.root.action.lateral == KEEP
        assert tree.root.action.longitudinal == MOD


class TestIntentions:
    def _world(self):
        left = straight_lane(0, 3.5, 500.0, 3.5, right_neighbor=1, change_right_allowed=True)
        right = straight_lane(1, 0.0, 500.0, 3.5, left_neighbor=0, change_left_allowed=True)
        return left, right

    def test_centered_agent_prefers_current(self, cfg):
        left, right = self._world()
        snap = make_snapshot([left, right], {0: vehicle(10, 0, speed=10),
                                             1: vehicle(50, 3.5, speed=10)})
        cands = dict(bh.estimate_agent_intention(snap, 1, cfg))
        assert cands[0] > cands[1]
        assert sum(cands.values()) == pytest.approx(1.0)

    def test_drifting_agent_prefers_neighbor(self, cfg):
        left, right = self._world()
        # agent at 0.9 half-widths toward the left lane and moving left
        st8 = vehicle(50.0, 0.9 * 1.75, heading=0.15, speed=10.0)
        snap = make_snapshot([left, right], {0: vehicle(10, 0, speed=10), 1: st8})
        cands = dict(bh.estimate_agent_intention(snap, 1, cfg))
        assert cands[0] > cands[1]

    def test_single_candidate(self, cfg):
        lane = straight_lane(0, 0.0, 500.0, 3.5)
        snap = make_snapshot([lane], {0: vehicle(10, 0, speed=10),
                                      1: vehicle(50, 0, speed=10)})
        cands = bh.estimate_agent_intention(snap, 1, cfg)
        assert cands == ((0, 1.0),)


def _merge_world(agents, statics=()):
    left = straight_lane(0, 3.5, 500.0, 3.5, right_neighbor=1, change_right_allowed=True)
    right = straight_lane(1, 0.0, 500.0, 3.5, left_neighbor=0, change_left_allowed=True)
    return make_snapshot([left, right], agents, statics)


def _policy(actions):
    return bh.PolicySequence(tuple(actions))


def _lane_change_policy(target=0, style=MOD, h=5):
    return _policy([SemanticAction(LEFT, style, target)] * h)


def _synthetic_eval(index, policy, collided):
    trace = bh.ForwardTrace(states=np.zeros((26, 1, 4)), controls=np.zeros((25, 1, 2)),
                            rss=np.zeros((25, 4)), collision_step=3 if collided else -1,
                            agent_ids=(0,), dt=0.2)
    sc = bh.Scenario(assignment=(), weight=1.0, critical=())
    sr = bh.ScenarioResult(scenario=sc, trace=trace, cost_efficiency=0.0,
                           cost_safety=0.0, cost_total=0.0)
    return bh.PolicyEvaluation(index=index, policy=policy, scenarios=[sr],
                               cost_navigation=0.0, b_navi=False, b_consist=False)


class TestCfb:
    def test_no_agents_single_scenario(self, cfg):
        snap = _merge_world({0: vehicle(50, 0, speed=10)})
        kw = bh.build_kernel_world(snap, cfg)
        belief = bh.estimate_intentions(snap, cfg)
        lane_sched, idm_sched, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        scen = bh.cfb(kw, belief, lane_sched, idm_sched, kw.lane_index(1), cfg)
        assert len(scen) == 1
        assert scen[0].weight == pytest.approx(1.0)

    def test_conflicting_agent_unfolds(self, cfg):
        # one agent right beside the merge path with two candidate lanes,
        # one far-away agent that stays pinned at its most likely lane
        snap = _merge_world({0: vehicle(50, 0, speed=10),
                             1: vehicle(54, 3.5, speed=10),
                             2: vehicle(300, 3.5, speed=10)})
        kw = bh.build_kernel_world(snap, cfg)
        belief = bh.estimate_intentions(snap, cfg)
        lane_sched, idm_sched, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        scen = bh.cfb(kw, belief, lane_sched, idm_sched, kw.lane_index(1), cfg)
        assert len(scen) == 2
        assert all(s.critical == (1,) for s in scen)
        assert sum(s.weight for s in scen) == pytest.approx(1.0)
        # the far agent keeps the most likely lane in every scenario
        for s in scen:
            assert s.lane_of(2) == 0

    def test_three_critical_agents_enumerate(self, cfg):
        snap = _merge_world({0: vehicle(50, 0, speed=10),
                             1: vehicle(47, 3.5, speed=10),
                             2: vehicle(62, 3.5, speed=10),
                             3: vehicle(35, 3.5, speed=11)})
        kw = bh.build_kernel_world(snap, cfg)
        belief = bh.estimate_intentions(snap, cfg)
        lane_sched, idm_sched, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        scen = bh.cfb(kw, belief, lane_sched, idm_sched, kw.lane_index(1), cfg)
        if {s.critical for s in scen} == {(1, 2, 3)}:
            assert len(scen) == 8
        assert sum(s.weight for s in scen) == pytest.approx(1.0, abs=1e-9)

    def test_scenario_cap(self, cfg):
        cfg = with_overrides(cfg, planner={"scenario_cap": 4})
        snap = _merge_world({0: vehicle(50, 0, speed=10),
                             1: vehicle(47, 3.5, speed=10),
                             2: vehicle(62, 3.5, speed=10),
                             3: vehicle(35, 3.5, speed=11)})
        kw = bh.build_kernel_world(snap, cfg)
        belief = bh.estimate_intentions(snap, cfg)
        lane_sched, idm_sched, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        scen = bh.cfb(kw, belief, lane_sched, idm_sched, kw.lane_index(1), cfg)
        assert len(scen) <= 4
        assert sum(s.weight for s in scen) == pytest.approx(1.0, abs=1e-9)


class TestForwardSimulation:
    def test_empty_road_constant_speed(self, cfg):
        v = cfg.planner.preferred_speed
        snap = _merge_world({0: vehicle(50, 0, speed=v)})
        kw = bh.build_kernel_world(snap, cfg)
        policy = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        ls, ids_, _spans = bh.policy_schedule(policy, kw, cfg)
        trace = bh.run_rollout(kw, {}, ls, ids_, kw.lane_index(1),
                               0, True)
        assert not trace.collided
        assert trace.rss[:, 0].sum() == 0
        np.testing.assert_allclose(trace.states[:, 0, 3], v, atol=1e-6)
        np.testing.assert_allclose(trace.states[:, 0, 1], 0.0, atol=1e-6)

    def test_lane_change_completes(self, cfg):
        # cooperative follower at 2 s headway: the merge finishes within 5 s
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(38, 3.5, speed=10),
                             2: vehicle(95, 3.5, speed=10)})
        kw = bh.build_kernel_world(snap, cfg)
        ls, ids_, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        trace = bh.run_rollout(kw, {1: 0, 2: 0}, ls, ids_, kw.lane_index(1), 0, True)
        assert not trace.collided
        d_final = abs(trace.states[-1, 0, 1] - 3.5)
        assert d_final < 0.2

    def test_determinism(self, cfg):
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(40, 3.5, speed=10)})
        kw = bh.build_kernel_world(snap, cfg)
        ls, ids_, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        t1 = bh.run_rollout(kw, {1: 0}, ls, ids_, kw.lane_index(1), 0, True)
        t2 = bh.run_rollout(kw, {1: 0}, ls, ids_, kw.lane_index(1), 0, True)
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.controls, t2.controls)

    def test_replay_matches_bicycle_op(self, cfg):
        # recorded controls re-integrated through the reference transition
        from interplan.agents import ControlInput, step_bicycle
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(40, 3.5, speed=9.5)})
        kw = bh.build_kernel_world(snap, cfg)
        ls, ids_, _spans = bh.policy_schedule(_lane_change_policy(), kw, cfg)
        trace = bh.run_rollout(kw, {1: 0}, ls, ids_, kw.lane_index(1), 0, True)
        for row, aid in enumerate(trace.agent_ids):
            st = snap.agents[aid]
            for k in range(kw.n_steps):
                u = ControlInput(*trace.controls[k, row])
                st = step_bicycle(st, u, kw.dt)
                assert st.x == pytest.approx(trace.states[k + 1, row, 0], abs=1e-9)
                assert st.y == pytest.approx(trace.states[k + 1, row, 1], abs=1e-9)
                assert st.speed == pytest.approx(trace.states[k + 1, row, 3], abs=1e-9)

    def test_collision_truncates(self, cfg):
        # ego driving straight into a static obstacle without braking room
        snap = _merge_world({0: vehicle(50, 0, speed=20)},
                            [StaticObstacle(1, 58.0, 62.6, -0.95, 0.95)])
        kw = bh.build_kernel_world(snap, cfg)
        policy = _policy([SemanticAction(KEEP, AGG, 1)] * 5)
        ls, ids_, _spans = bh.policy_schedule(policy, kw, cfg)
        trace = bh.run_rollout(kw, {}, ls, ids_, kw.lane_index(1), 0, False)
        assert trace.collided
        after = trace.states[trace.collision_step + 1:]
        assert np.ptp(after[:, 0, 0]) == pytest.approx(0.0)


class TestCosts:
    def _trace(self, cfg, n_agents=1, v_ego=10.0):
        snap = _merge_world({0: vehicle(50, 0, speed=v_ego)})
        kw = bh.build_kernel_world(snap, cfg)
        policy = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        ls, ids_, _spans = bh.policy_schedule(policy, kw, cfg)
        return bh.run_rollout(kw, {}, ls, ids_, kw.lane_index(1), 0, True), kw, policy

    def test_efficiency_zero_at_pref(self, cfg):
        trace, kw, policy = self._trace(cfg, v_ego=cfg.planner.preferred_speed)
        assert bh.efficiency_cost(trace, policy, kw, cfg) == pytest.approx(0.0, abs=1e-9)

    def test_efficiency_hand_computed(self, cfg):
        cfg = with_overrides(cfg, weights={"speed_pref": 1.0, "overshoot": 1.0,
                                           "lead_pref": 1.0, "discount": 0.7})
        trace, kw, policy = self._trace(cfg)
        # no leader: only the preferred-speed mismatch counts, at action ends
        v_pref = cfg.planner.preferred_speed
        ends = [(i + 1) * 5 for i in range(5)]
        expected = sum(0.7 ** i * abs(trace.states[e, 0, 3] - v_pref)
                       for i, e in enumerate(ends))
        assert bh.efficiency_cost(trace, policy, kw, cfg) == pytest.approx(expected)

    def test_safety_cost_clean_trace(self, cfg):
        trace, _, _ = self._trace(cfg, v_ego=cfg.planner.preferred_speed)
        assert bh.safety_cost(trace, cfg) == pytest.approx(0.0)

    def test_safety_cost_flagged_step(self, cfg):
        trace, _, _ = self._trace(cfg)
        # forge one dangerous step in action 0 with a known interval
        trace.rss[2, :] = (1.0, 0.0, 12.0, 0.0)
        trace.states[2, 0, 3] = 15.0
        expected = 15.0 * cfg.weights.rss_base * np.exp(cfg.weights.rss_exp * 3.0)
        assert bh.safety_cost(trace, cfg) == pytest.approx(expected)

    def test_safety_cost_inside_interval(self, cfg):
        trace, _, _ = self._trace(cfg)
        trace.rss[2, :] = (1.0, 0.0, 30.0, 0.0)
        v = trace.states[2, 0, 3]
        assert bh.safety_cost(trace, cfg) == pytest.approx(v * cfg.weights.rss_base)

    def test_navigation_flags(self, cfg):
        lc = _lane_change_policy()
        keep = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        c0, n0, h0 = bh.navigation_cost(keep, 1, None, None, cfg)
        assert (c0, n0, h0) == (0.0, False, False)
        c1, n1, _ = bh.navigation_cost(lc, 1, "left", None, cfg)
        assert n1 and c1 == pytest.approx(-cfg.weights.user_command)
        c2, _, h2 = bh.navigation_cost(lc, 1, "left", ("change", 0), cfg)
        assert h2 and c2 == pytest.approx(-(cfg.weights.user_command
                                            + cfg.weights.consistency))


class TestEvaluationAndSelection:
    def _evaluation(self, index, policy, rewards_costs, cfg):
        # rewards_costs: list of (weight, total_cost)
        scenarios = []
        for w, cost in rewards_costs:
            sc = bh.Scenario(assignment=(), weight=w, critical=())
            sr = bh.ScenarioResult(scenario=sc, trace=None, cost_efficiency=cost,
                                   cost_safety=0.0, cost_total=0.0)
            scenarios.append(sr)
        ev = bh.PolicyEvaluation(index=index, policy=policy, scenarios=scenarios,
                                 cost_navigation=0.0, b_navi=False, b_consist=False)
        ev.reward = bh.evaluate_policy(ev, cfg)
        return ev

    def test_weighted_sum(self, cfg):
        policy = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        ev = self._evaluation(0, policy, [(0.7, 10.0), (0.3, 20.0)], cfg)
        assert ev.reward == pytest.approx(-13.0)

    def test_scenario_order_invariance(self, cfg):
        policy = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        a = self._evaluation(0, policy, [(0.7, 10.0), (0.3, 20.0)], cfg)
        b = self._evaluation(0, policy, [(0.3, 20.0), (0.7, 10.0)], cfg)
        assert a.reward == pytest.approx(b.reward)

    def test_select_argmax_and_tiebreak(self, cfg):
        keep = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        lc = _lane_change_policy()
        evs = []
        for i, (p, r) in enumerate([(lc, -5.0), (keep, -3.0), (lc, -9.0)]):
            ev = bh.PolicyEvaluation(index=i, policy=p, scenarios=[],
                                     cost_navigation=0.0, b_navi=False,
                                     b_consist=False)
            ev.reward = r
            ev.feasible = True
            evs.append(ev)
        assert bh.select_policy(evs, 1).index == 1
        evs[0].reward = -3.0  # tie between keep and change: keep wins
        assert bh.select_policy(evs, 1).index == 1

    def test_no_feasible_raises(self, cfg):
        keep = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        ev = bh.PolicyEvaluation(index=0, policy=keep, scenarios=[],
                                 cost_navigation=0.0, b_navi=False, b_consist=False)
        ev.feasible = False
        with pytest.raises(PlanningFailed):
            bh.select_policy([ev], 1)


class TestPlan:
    def test_empty_road_keeps_lane(self, cfg):
        snap = _merge_world({0: vehicle(50, 0, speed=cfg.planner.preferred_speed)})
        result = bh.plan(snap, cfg)
        assert result.chosen_maneuver == ("keep", 1)
        assert result.decision.target_lane == 1
        assert not result.chosen.scenarios[0].trace.collided

    def test_plan_determinism(self, cfg):
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(40, 3.5, speed=10),
                             2: vehicle(75, 3.5, speed=10)})
        r1 = bh.plan(snap, cfg)
        r2 = bh.plan(snap, cfg)
        assert r1.decision.policy_index == r2.decision.policy_index
        assert np.array_equal(r1.decision.states, r2.decision.states)
        assert [e.reward for e in r1.evaluations] == [e.reward for e in r2.evaluations]

    def test_scale_invariance_of_argmax(self, cfg):
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(40, 3.5, speed=10)},
                            [StaticObstacle(1, 150.0, 154.6, -0.95, 0.95)])
        r1 = bh.plan(snap, cfg)
        scaled = with_overrides(cfg, weights={"efficiency": 3.0, "safety": 3.0,
                                              "navigation": 3.0})
        r2 = bh.plan(snap, scaled)
        assert r1.decision.policy_index == r2.decision.policy_index

    def test_user_command_biases_choice(self, cfg):
        snap = _merge_world({0: vehicle(50, 0, speed=cfg.planner.preferred_speed)})
        r = bh.plan(snap, cfg, user_command="left")
        assert r.chosen.b_navi
        assert r.chosen_maneuver == ("change", 0)

    def test_variants_agree_on_empty_road(self, cfg):
        snap = _merge_world({0: vehicle(50, 0, speed=cfg.planner.preferred_speed)})
        base = bh.plan(snap, cfg, variant="interactive")
        for variant in ("no_safety", "decoupled"):
            other = bh.plan(snap, cfg, variant=variant)
            assert other.decision.policy_index == base.decision.policy_index

    def test_decoupled_prediction_fixed_across_policies(self, cfg):
        snap = _merge_world({0: vehicle(60, 0, speed=10),
                             1: vehicle(40, 3.5, speed=10),
                             2: vehicle(70, 3.5, speed=10)})
        r = bh.plan(snap, cfg, variant="decoupled")
        ref = None
        for ev in r.evaluations:
            agents_part = ev.scenarios[0].trace.states[:, 1:, :]
            if ref is None:
                ref = agents_part
            else:
                assert np.array_equal(ref, agents_part)

    def test_backup_gate_blocks_unsafe_change(self, cfg):
        # the change itself is clean, but its cancellation collides: gated out
        lc = _lane_change_policy(style=MOD)
        keep_mod = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        keep_con = _policy([SemanticAction(KEEP, CON, 1)] * 5)
        evs = [_synthetic_eval(0, lc, collided=False),
               _synthetic_eval(1, keep_mod, collided=True),
               _synthetic_eval(2, keep_con, collided=False)]
        bh.backup_gate(evs, 1, cfg)
        assert evs[0].backup_index == 1
        assert not evs[0].feasible     # cancellation is dirty
        assert not evs[1].feasible     # collides itself
        assert evs[2].feasible

    def test_gate_all_clean_all_feasible(self, cfg):
        lc = _lane_change_policy(style=MOD)
        keep_mod = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        evs = [_synthetic_eval(0, lc, collided=False),
               _synthetic_eval(1, keep_mod, collided=False)]
        bh.backup_gate(evs, 1, cfg)
        assert all(e.feasible for e in evs)

    def test_gate_raises_when_everything_collides(self, cfg):
        keep_mod = _policy([SemanticAction(KEEP, MOD, 1)] * 5)
        evs = [_synthetic_eval(0, keep_mod, collided=True)]
        with pytest.raises(PlanningFailed):
            bh.backup_gate(evs, 1, cfg)

    def test_unavoidable_hazard_fails_planning(self, cfg):
        # obstacle right ahead at speed: every policy, including every
        # cancellation, collides, so the cycle must report failure
        snap = _merge_world({0: vehicle(50, 0, speed=20)},
                            [StaticObstacle(1, 70.0, 74.6, -0.95, 0.95)])
        with pytest.raises(PlanningFailed):
            bh.plan(snap, cfg)

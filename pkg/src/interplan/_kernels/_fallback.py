"""Pure-Python rollout kernel.

Mirrors the compiled kernel operation for operation so both backends
produce the same trajectories.  Scalar-loop style is intentional: the
Cython translation follows this file line by line.
"""

from __future__ import annotations

import math

from ._params import (MODE_CLOSED_LOOP, MODE_EGO_VS_FROZEN, MODE_EXTERNAL_EGO,
                      MODE_NO_EGO, MODE_OPEN_LOOP, PAR_ACC_MAX, PAR_AHARD, PAR_BRK_MAX,
                      PAR_BRK_MIN, PAR_KS, PAR_KV, PAR_LAT_ACC, PAR_LAT_BRK,
                      PAR_LAT_MU, PAR_LD_GAIN, PAR_LD_MAX, PAR_LD_MIN,
                      PAR_LMIN, PAR_LSAFE, PAR_RHO, PAR_STEER_MAX, PAR_TSAFE,
                      PAR_VMAX, PAR_VPREF)

BACKEND = "python"

_HYST = 0.1  # m, hysteresis of the current-lane tracker


def _project(lane_x, lane_y, lane_s, lo, hi, px, py):
    """Closest-point projection onto one polyline slice.

    Returns (s, d, seg_heading_cos, seg_heading_sin).  End overruns clamp.
    """
    best = math.inf
    bi = lo
    bt = 0.0
    for i in range(lo, hi - 1):
        dx = lane_x[i + 1] - lane_x[i]
        dy = lane_y[i + 1] - lane_y[i]
        seg2 = dx * dx + dy * dy
        t = ((px - lane_x[i]) * dx + (py - lane_y[i]) * dy) / seg2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        fx = lane_x[i] + t * dx - px
        fy = lane_y[i] + t * dy - py
        d2 = fx * fx + fy * fy
        if d2 < best:
            best = d2
            bi = i
            bt = t
    i = bi
    dx = lane_x[i + 1] - lane_x[i]
    dy = lane_y[i + 1] - lane_y[i]
    seg = math.sqrt(dx * dx + dy * dy)
    s = lane_s[i] + bt * seg
    d = (dx * (py - lane_y[i]) - dy * (px - lane_x[i])) / seg
    return s, d, dx / seg, dy / seg


def _point_at(lane_x, lane_y, lane_s, lo, hi, s):
    """Point and tangent at arclength s, extrapolating past either end."""
    if s <= lane_s[lo]:
        i = lo
    elif s >= lane_s[hi - 1]:
        i = hi - 2
    else:
        a, b = lo, hi - 1
        while b - a > 1:
            m = (a + b) // 2
            if lane_s[m] <= s:
                a = m
            else:
                b = m
        i = a
    dx = lane_x[i + 1] - lane_x[i]
    dy = lane_y[i + 1] - lane_y[i]
    seg = math.sqrt(dx * dx + dy * dy)
    t = (s - lane_s[i]) / seg
    return (lane_x[i] + t * dx, lane_y[i] + t * dy, dx / seg, dy / seg)


def _idm(v, v_lead, gap, v_des, t_hw, s0, a_max, b_comf, expo, a_hard, has_leader):
    if has_leader:
        if gap <= 0.0:
            return -a_hard
        dv = v - v_lead
        s_star = s0 + v * t_hw + v * dv / (2.0 * math.sqrt(a_max * b_comf))
        if s_star < s0:
            s_star = s0
        a = a_max * (1.0 - (v / v_des) ** expo - (s_star / gap) * (s_star / gap))
    else:
        a = a_max * (1.0 - (v / v_des) ** expo)
    if a < -a_hard:
        a = -a_hard
    elif a > a_max:
        a = a_max
    return a


def _rk4(x, y, th, v, a, steer, wb, dt):
    tansb = math.tan(steer) / wb
    c1x = v * math.cos(th)
    c1y = v * math.sin(th)
    c1t = v * tansb
    v2 = v + 0.5 * dt * a
    th2 = th + 0.5 * dt * c1t
    c2x = v2 * math.cos(th2)
    c2y = v2 * math.sin(th2)
    c2t = v2 * tansb
    th3 = th + 0.5 * dt * c2t
    c3x = v2 * math.cos(th3)
    c3y = v2 * math.sin(th3)
    c3t = v2 * tansb
    v4 = v + dt * a
    th4 = th + dt * c3t
    c4x = v4 * math.cos(th4)
    c4y = v4 * math.sin(th4)
    c4t = v4 * tansb
    return (
        x + dt / 6.0 * (c1x + 2.0 * c2x + 2.0 * c3x + c4x),
        y + dt / 6.0 * (c1y + 2.0 * c2y + 2.0 * c3y + c4y),
        th + dt / 6.0 * (c1t + 2.0 * c2t + 2.0 * c3t + c4t),
        v + dt * a,
    )


def _step_vehicle(x, y, th, v, a, steer, wb, dt):
    if v <= 0.0 and a <= 0.0:
        return x, y, th, 0.0
    if a < 0.0 and v + a * dt < 0.0:
        t_stop = v / (-a)
        x, y, th, v = _rk4(x, y, th, v, a, steer, wb, t_stop)
        return x, y, th, 0.0
    x, y, th, v = _rk4(x, y, th, v, a, steer, wb, dt)
    if v < 0.0:
        v = 0.0
    return x, y, th, v


def _rss_lon(v_rear, v_front, rho, acc, bmin, bmax):
    v_rho = v_rear + rho * acc
    d = (v_rear * rho + 0.5 * acc * rho * rho
         + v_rho * v_rho / (2.0 * bmin) - v_front * v_front / (2.0 * bmax))
    return d if d > 0.0 else 0.0


def _rss_lat(v1, v2, rho, lat_acc, lat_brk, mu):
    tot = 0.0
    for v in (v1, v2):
        v_rho = v + rho * lat_acc
        c = 0.5 * (v + v_rho) * rho
        if v_rho > 0.0:
            c += v_rho * v_rho / (2.0 * lat_brk)
        tot += c
    if tot < 0.0:
        tot = 0.0
    return mu + tot


def _max_safe_rear_speed(gap, v_front, rho, acc, bmin, bmax):
    rhs = gap + v_front * v_front / (2.0 * bmax) - 0.5 * acc * rho * rho
    a = 1.0 / (2.0 * bmin)
    c0 = rho * acc
    big_b = 2.0 * a * c0 + rho
    big_c = a * c0 * c0 - rhs
    disc = big_b * big_b - 4.0 * a * big_c
    if disc <= 0.0:
        return 0.0
    r = (-big_b + math.sqrt(disc)) / (2.0 * a)
    return r if r > 0.0 else 0.0


def _min_safe_front_speed(gap, v_rear, rho, acc, bmin, bmax):
    need = (v_rear * rho + 0.5 * acc * rho * rho
            + (v_rear + rho * acc) ** 2 / (2.0 * bmin) - gap)
    if need <= 0.0:
        return 0.0
    return math.sqrt(2.0 * bmax * need)


def _rect_overlap(x1, y1, th1, l1, w1, x2, y2, th2, l2, w2):
    """Separating-axis overlap of two oriented rectangles."""
    c1 = math.cos(th1)
    s1 = math.sin(th1)
    c2 = math.cos(th2)
    s2 = math.sin(th2)
    dx = x2 - x1
    dy = y2 - y1
    hl1 = 0.5 * l1
    hw1 = 0.5 * w1
    hl2 = 0.5 * l2
    hw2 = 0.5 * w2
    for k in range(4):
        if k == 0:
            ax, ay = c1, s1
        elif k == 1:
            ax, ay = -s1, c1
        elif k == 2:
            ax, ay = c2, s2
        else:
            ax, ay = -s2, c2
        r1 = hl1 * abs(ax * c1 + ay * s1) + hw1 * abs(-ax * s1 + ay * c1)
        r2 = hl2 * abs(ax * c2 + ay * s2) + hw2 * abs(-ax * s2 + ay * c2)
        dist = abs(ax * dx + ay * dy)
        if dist > r1 + r2:
            return False
    return True


def rollout(lane_x, lane_y, lane_s, lane_off, lane_width,
            stat_lane, stat_s0, stat_s1, stat_d0, stat_d1,
            st0, geom, lane_idx, idm, consider_range,
            ego_lane_sched, ego_idm_sched, ego_lane_start,
            par, mode, rss_override, frozen,
            out_states, out_ctrl, out_rss, n_steps, dt):
    """Fixed-step multi-agent rollout.  Returns the collision step or -1.

    Modes: 0 closed loop; 1 traffic only (ego frozen and invisible);
    2 ego against a prerecorded traffic tape; 3 open loop (no interaction,
    used for conflict probing).
    """
    n_agents = st0.shape[0]
    n_lanes = lane_width.shape[0]
    n_stat = stat_lane.shape[0]

    xs = [0.0] * n_agents
    ys = [0.0] * n_agents
    ths = [0.0] * n_agents
    vs = [0.0] * n_agents
    for i in range(n_agents):
        xs[i] = st0[i, 0]
        ys[i] = st0[i, 1]
        ths[i] = st0[i, 2]
        vs[i] = st0[i, 3]
        out_states[0, i, 0] = xs[i]
        out_states[0, i, 1] = ys[i]
        out_states[0, i, 2] = ths[i]
        out_states[0, i, 3] = vs[i]

    acc = [0.0] * n_agents
    steer = [0.0] * n_agents
    proj_s = [0.0] * n_agents

    ego_cur = ego_lane_start
    interact = mode != MODE_OPEN_LOOP
    visible_ego = mode != MODE_NO_EGO
    control_ego = mode in (MODE_CLOSED_LOOP, MODE_EGO_VS_FROZEN, MODE_OPEN_LOOP)
    collision = -1

    for step in range(n_steps):
        # --- projections of every agent onto every lane are computed lazily;
        # cache per-agent projection on its own assigned lane here.
        for i in range(n_agents):
            lo = lane_off[lane_idx[i]]
            hi = lane_off[lane_idx[i] + 1]
            s, d, _, _ = _project(lane_x, lane_y, lane_s, lo, hi, xs[i], ys[i])
            proj_s[i] = s

        # --- background agents -------------------------------------------
        for i in range(1, n_agents):
            if mode == MODE_EGO_VS_FROZEN:
                continue
            li = lane_idx[i]
            lo = lane_off[li]
            hi = lane_off[li + 1]
            s_i = proj_s[i]
            # nearest body ahead within the lateral consider range
            lead_s = math.inf
            lead_v = 0.0
            lead_len = 0.0
            if interact:
                for j in range(n_agents):
                    if j == i or (j == 0 and not visible_ego):
                        continue
                    sj, dj, _, _ = _project(lane_x, lane_y, lane_s, lo, hi, xs[j], ys[j])
                    if abs(dj) <= consider_range[i] and sj > s_i and sj < lead_s:
                        lead_s = sj
                        lead_v = vs[j]
                        lead_len = geom[j, 0]
                for k in range(n_stat):
                    if stat_lane[k] != li:
                        continue
                    sc = 0.5 * (stat_s0[k] + stat_s1[k])
                    if sc > s_i and sc < lead_s:
                        lead_s = sc
                        lead_v = 0.0
                        lead_len = stat_s1[k] - stat_s0[k]
            has_lead = lead_s < math.inf
            gap = (lead_s - 0.5 * lead_len) - (s_i + 0.5 * geom[i, 0]) if has_lead else 0.0
            a_cmd = _idm(vs[i], lead_v, gap, idm[i, 0], idm[i, 1], idm[i, 2],
                         idm[i, 3], idm[i, 4], idm[i, 5], par[PAR_AHARD], has_lead)
            # pure pursuit toward the assigned centerline
            ld = par[PAR_LD_GAIN] * vs[i]
            if ld < par[PAR_LD_MIN]:
                ld = par[PAR_LD_MIN]
            elif ld > par[PAR_LD_MAX]:
                ld = par[PAR_LD_MAX]
            tx, ty, _, _ = _point_at(lane_x, lane_y, lane_s, lo, hi, s_i + ld)
            alpha = math.atan2(ty - ys[i], tx - xs[i]) - ths[i]
            alpha = math.atan2(math.sin(alpha), math.cos(alpha))
            d_cmd = math.atan2(2.0 * geom[i, 2] * math.sin(alpha), ld)
            if d_cmd > par[PAR_STEER_MAX]:
                d_cmd = par[PAR_STEER_MAX]
            elif d_cmd < -par[PAR_STEER_MAX]:
                d_cmd = -par[PAR_STEER_MAX]
            acc[i] = a_cmd
            steer[i] = d_cmd

        # --- ego ----------------------------------------------------------
        if control_ego:
            lane_t = ego_lane_sched[step]
            # current lane tracking with hysteresis
            lo = lane_off[ego_cur]
            hi = lane_off[ego_cur + 1]
            s_c, d_c, _, _ = _project(lane_x, lane_y, lane_s, lo, hi, xs[0], ys[0])
            for li in range(n_lanes):
                if li == ego_cur:
                    continue
                lo2 = lane_off[li]
                hi2 = lane_off[li + 1]
                s2, d2, _, _ = _project(lane_x, lane_y, lane_s, lo2, hi2, xs[0], ys[0])
                if abs(d2) < abs(d_c) - _HYST:
                    ego_cur = li
                    s_c, d_c = s2, d2
            lo = lane_off[ego_cur]
            hi = lane_off[ego_cur + 1]

            # car following on the current lane
            lead_s = math.inf
            lead_v = 0.0
            lead_len = 0.0
            if interact:
                for j in range(1, n_agents):
                    sj, dj, _, _ = _project(lane_x, lane_y, lane_s, lo, hi, xs[j], ys[j])
                    if abs(dj) <= consider_range[0] and sj > s_c and sj < lead_s:
                        lead_s = sj
                        lead_v = vs[j]
                        lead_len = geom[j, 0]
                for k in range(n_stat):
                    if stat_lane[k] != ego_cur:
                        continue
                    sc = 0.5 * (stat_s0[k] + stat_s1[k])
                    if sc > s_c and sc < lead_s:
                        lead_s = sc
                        lead_v = 0.0
                        lead_len = stat_s1[k] - stat_s0[k]
            has_lead = lead_s < math.inf
            gap = (lead_s - 0.5 * lead_len) - (s_c + 0.5 * geom[0, 0]) if has_lead else 0.0
            a_idm = _idm(vs[0], lead_v, gap,
                         ego_idm_sched[step, 0], ego_idm_sched[step, 1],
                         ego_idm_sched[step, 2], ego_idm_sched[step, 3],
                         ego_idm_sched[step, 4], ego_idm_sched[step, 5],
                         par[PAR_AHARD], has_lead)

            ref_lane = ego_cur
            ref_off = 0.0
            a_cmd = a_idm
            if lane_t != ego_cur:
                lo_t = lane_off[lane_t]
                hi_t = lane_off[lane_t + 1]
                s_t, d_t, _, _ = _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[0], ys[0])
                # new leader / follower in the target lane
                f_s = math.inf
                f_v = 0.0
                f_len = 0.0
                r_s = -math.inf
                r_v = 0.0
                r_len = 0.0
                if interact:
                    for j in range(1, n_agents):
                        sj, dj, _, _ = _project(lane_x, lane_y, lane_s, lo_t, hi_t,
                                                xs[j], ys[j])
                        if abs(dj) > consider_range[0]:
                            continue
                        if sj > s_t:
                            if sj < f_s:
                                f_s = sj
                                f_v = vs[j]
                                f_len = geom[j, 0]
                        elif sj > r_s:
                            r_s = sj
                            r_v = vs[j]
                            r_len = geom[j, 0]
                s_des = s_t
                v_des = par[PAR_VPREF]
                if r_s > -math.inf:
                    s_tr = (r_s + 0.5 * r_len) + par[PAR_LMIN] + par[PAR_TSAFE] * r_v
                    if s_tr > s_des:
                        s_des = s_tr
                    if r_v > v_des:
                        v_des = r_v
                if f_s < math.inf:
                    s_tf = (f_s - 0.5 * f_len) - par[PAR_LMIN] + par[PAR_TSAFE] * vs[0]
                    if s_tf < s_des:
                        s_des = s_tf
                    if f_v < v_des:
                        v_des = f_v
                a_track = par[PAR_KV] * (v_des + par[PAR_KS] * (s_des - s_t) - vs[0])
                if a_track > par[PAR_AHARD]:
                    a_track = par[PAR_AHARD]
                elif a_track < -par[PAR_AHARD]:
                    a_track = -par[PAR_AHARD]
                a_cmd = a_track if a_track < a_idm else a_idm
                # is the abreast slice of the target lane free?
                space_free = True
                blk_lo = s_t - 0.5 * geom[0, 0] - par[PAR_LMIN]
                blk_hi = s_t + 0.5 * geom[0, 0] + par[PAR_LMIN]
                l_oc = math.inf
                if interact:
                    half_t = 0.5 * lane_width[lane_t]
                    # marking between the lanes sits on the ego side of the target
                    side = -1.0 if d_t < 0.0 else 1.0
                    for j in range(1, n_agents):
                        sj, dj, _, _ = _project(lane_x, lane_y, lane_s, lo_t, hi_t,
                                                xs[j], ys[j])
                        if abs(dj) > half_t:
                            continue
                        if sj + 0.5 * geom[j, 0] > blk_lo and sj - 0.5 * geom[j, 0] < blk_hi:
                            space_free = False
                            edge = dj * side + 0.5 * geom[j, 1]
                            c = half_t - edge
                            if c < 0.0:
                                c = 0.0
                            if c < l_oc:
                                l_oc = c
                if space_free:
                    ref_lane = lane_t
                    ref_off = 0.0
                else:
                    if l_oc == math.inf:
                        l_oc = 0.0
                    extra = par[PAR_LSAFE] - l_oc
                    if extra < 0.0:
                        extra = 0.0
                    d_g2 = 0.5 * lane_width[ego_cur] - 0.5 * geom[0, 1] - extra
                    # d_t < 0 means the target centerline lies to our left
                    toward = 1.0 if d_t < 0.0 else -1.0
                    ref_lane = ego_cur
                    ref_off = toward * d_g2

            # steering via pure pursuit on the reference
            ld = par[PAR_LD_GAIN] * vs[0]
            if ld < par[PAR_LD_MIN]:
                ld = par[PAR_LD_MIN]
            elif ld > par[PAR_LD_MAX]:
                ld = par[PAR_LD_MAX]
            lo_r = lane_off[ref_lane]
            hi_r = lane_off[ref_lane + 1]
            s_r0, _, _, _ = _project(lane_x, lane_y, lane_s, lo_r, hi_r, xs[0], ys[0])
            tx, ty, tcx, tcy = _point_at(lane_x, lane_y, lane_s, lo_r, hi_r, s_r0 + ld)
            tx -= ref_off * tcy
            ty += ref_off * tcx
            alpha = math.atan2(ty - ys[0], tx - xs[0]) - ths[0]
            alpha = math.atan2(math.sin(alpha), math.cos(alpha))
            d_cmd = math.atan2(2.0 * geom[0, 2] * math.sin(alpha), ld)
            if d_cmd > par[PAR_STEER_MAX]:
                d_cmd = par[PAR_STEER_MAX]
            elif d_cmd < -par[PAR_STEER_MAX]:
                d_cmd = -par[PAR_STEER_MAX]

            # safe-distance check in the frame of the scheduled lane
            out_rss[step, 0] = 0.0
            out_rss[step, 1] = 0.0
            out_rss[step, 2] = par[PAR_VMAX]
            out_rss[step, 3] = 0.0
            if interact:
                lo_t = lane_off[lane_t]
                hi_t = lane_off[lane_t + 1]
                se, de, tcx, tcy = _project(lane_x, lane_y, lane_s, lo_t, hi_t,
                                            xs[0], ys[0])
                # velocity rotated into the lane frame via the local tangent
                vs_e = vs[0] * (math.cos(ths[0]) * tcx + math.sin(ths[0]) * tcy)
                vd_e = vs[0] * (math.sin(ths[0]) * tcx - math.cos(ths[0]) * tcy)
                dangerous = False
                v_lb = 0.0
                v_ub = par[PAR_VMAX]
                a_hi = math.inf
                blk_l = False
                blk_r = False
                rho = par[PAR_RHO]
                amx = par[PAR_ACC_MAX]
                bmn = par[PAR_BRK_MIN]
                bmx = par[PAR_BRK_MAX]
                for j in range(1, n_agents + n_stat):
                    if j < n_agents:
                        sj, dj, jcx, jcy = _project(lane_x, lane_y, lane_s, lo_t, hi_t,
                                                    xs[j], ys[j])
                        lnj = geom[j, 0]
                        wdj = geom[j, 1]
                        vsj = vs[j] * (math.cos(ths[j]) * jcx + math.sin(ths[j]) * jcy)
                        vdj = vs[j] * (math.sin(ths[j]) * jcx - math.cos(ths[j]) * jcy)
                    else:
                        k = j - n_agents
                        if stat_lane[k] != lane_t and stat_lane[k] != ego_cur:
                            continue
                        # static boxes live in their own lane frame; reproject center
                        lo_s = lane_off[stat_lane[k]]
                        hi_s = lane_off[stat_lane[k] + 1]
                        cx, cy, ncx, ncy = _point_at(lane_x, lane_y, lane_s, lo_s, hi_s,
                                                     0.5 * (stat_s0[k] + stat_s1[k]))
                        dmid = 0.5 * (stat_d0[k] + stat_d1[k])
                        cx -= dmid * ncy
                        cy += dmid * ncx
                        sj, dj, _, _ = _project(lane_x, lane_y, lane_s, lo_t, hi_t, cx, cy)
                        lnj = stat_s1[k] - stat_s0[k]
                        wdj = stat_d1[k] - stat_d0[k]
                        vsj = 0.0
                        vdj = 0.0
                    if sj >= se:
                        gap_lon = (sj - 0.5 * lnj) - (se + 0.5 * geom[0, 0])
                        d_lon = _rss_lon(vs_e, vsj, rho, amx, bmn, bmx)
                    else:
                        gap_lon = (se - 0.5 * geom[0, 0]) - (sj + 0.5 * lnj)
                        d_lon = _rss_lon(vsj, vs_e, rho, amx, bmn, bmx)
                    if gap_lon >= d_lon:
                        continue
                    gap_lat = abs(de - dj) - 0.5 * (geom[0, 1] + wdj)
                    if de <= dj:
                        d_lat = _rss_lat(vd_e, -vdj, rho, par[PAR_LAT_ACC],
                                         par[PAR_LAT_BRK], par[PAR_LAT_MU])
                        toward_haz = vd_e
                        haz_left = True
                    else:
                        d_lat = _rss_lat(-vd_e, vdj, rho, par[PAR_LAT_ACC],
                                         par[PAR_LAT_BRK], par[PAR_LAT_MU])
                        toward_haz = -vd_e
                        haz_left = False
                    if gap_lat >= d_lat:
                        continue
                    dangerous = True
                    if sj >= se:
                        ub = _max_safe_rear_speed(gap_lon, vsj, rho, amx, bmn, bmx)
                        if ub < v_ub:
                            v_ub = ub
                        if -bmn < a_hi:
                            a_hi = -bmn
                    else:
                        lb = _min_safe_front_speed(gap_lon, vsj, rho, amx, bmn, bmx)
                        if lb > v_lb:
                            v_lb = lb
                    if toward_haz > 1e-6:
                        if haz_left:
                            blk_l = True
                        else:
                            blk_r = True
                if dangerous:
                    out_rss[step, 0] = 1.0
                    out_rss[step, 1] = v_lb
                    out_rss[step, 2] = v_ub
                    if rss_override:
                        new_a = a_cmd
                        if a_hi < math.inf and new_a > a_hi:
                            new_a = a_hi
                        if new_a < -bmx:
                            new_a = -bmx
                        new_d = d_cmd
                        if blk_l and new_d > 0.0:
                            new_d = 0.0
                        if blk_r and new_d < 0.0:
                            new_d = 0.0
                        if new_a != a_cmd or new_d != d_cmd:
                            out_rss[step, 3] = 1.0
                        a_cmd = new_a
                        d_cmd = new_d
            acc[0] = a_cmd
            steer[0] = d_cmd
        else:
            out_rss[step, 0] = 0.0
            out_rss[step, 1] = 0.0
            out_rss[step, 2] = par[PAR_VMAX]
            out_rss[step, 3] = 0.0

        # --- integrate ----------------------------------------------------
        for i in range(n_agents):
            if i == 0 and not control_ego:
                pass  # ego driven outside the kernel (or absent)
            elif i > 0 and mode == MODE_EGO_VS_FROZEN:
                xs[i] = frozen[step + 1, i, 0]
                ys[i] = frozen[step + 1, i, 1]
                ths[i] = frozen[step + 1, i, 2]
                vs[i] = frozen[step + 1, i, 3]
            else:
                xs[i], ys[i], ths[i], vs[i] = _step_vehicle(
                    xs[i], ys[i], ths[i], vs[i], acc[i], steer[i], geom[i, 2], dt)
            out_states[step + 1, i, 0] = xs[i]
            out_states[step + 1, i, 1] = ys[i]
            out_states[step + 1, i, 2] = ths[i]
            out_states[step + 1, i, 3] = vs[i]
            out_ctrl[step, i, 0] = acc[i]
            out_ctrl[step, i, 1] = steer[i]

        # --- collision test (ego against everything) ----------------------
        if control_ego and interact and collision < 0:
            for j in range(1, n_agents):
                if _rect_overlap(xs[0], ys[0], ths[0], geom[0, 0], geom[0, 1],
                                 xs[j], ys[j], ths[j], geom[j, 0], geom[j, 1]):
                    collision = step
                    break
            if collision < 0:
                for k in range(n_stat):
                    lo_s = lane_off[stat_lane[k]]
                    hi_s = lane_off[stat_lane[k] + 1]
                    cx, cy, ncx, ncy = _point_at(lane_x, lane_y, lane_s, lo_s, hi_s,
                                                 0.5 * (stat_s0[k] + stat_s1[k]))
                    dmid = 0.5 * (stat_d0[k] + stat_d1[k])
                    cx -= dmid * ncy
                    cy += dmid * ncx
                    if _rect_overlap(xs[0], ys[0], ths[0], geom[0, 0], geom[0, 1],
                                     cx, cy, math.atan2(ncy, ncx),
                                     stat_s1[k] - stat_s0[k], stat_d1[k] - stat_d0[k]):
                        collision = step
                        break
            if collision >= 0:
                # truncate: hold the colliding states for the rest of the horizon
                for rest in range(step + 1, n_steps):
                    for i in range(n_agents):
                        out_states[rest + 1, i, 0] = xs[i]
                        out_states[rest + 1, i, 1] = ys[i]
                        out_states[rest + 1, i, 2] = ths[i]
                        out_states[rest + 1, i, 3] = vs[i]
                        out_ctrl[rest, i, 0] = 0.0
                        out_ctrl[rest, i, 1] = 0.0
                    out_rss[rest, 0] = 0.0
                    out_rss[rest, 1] = 0.0
                    out_rss[rest, 2] = par[PAR_VMAX]
                    out_rss[rest, 3] = 0.0
                return collision
    return collision

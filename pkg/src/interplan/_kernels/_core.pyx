# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel.

Direct translation of _fallback.py; both backends must produce identical
trajectories.  Keep the arithmetic order in sync when editing either file.
"""

from libc.math cimport atan2, cos, fabs, sin, sqrt, tan, INFINITY, pow

BACKEND = "compiled"

cdef enum:
    PAR_VPREF = 0
    PAR_KV = 1
    PAR_KS = 2
    PAR_LMIN = 3
    PAR_TSAFE = 4
    PAR_LSAFE = 5
    PAR_LD_GAIN = 6
    PAR_LD_MIN = 7
    PAR_LD_MAX = 8
    PAR_STEER_MAX = 9
    PAR_RHO = 10
    PAR_ACC_MAX = 11
    PAR_BRK_MIN = 12
    PAR_BRK_MAX = 13
    PAR_LAT_ACC = 14
    PAR_LAT_BRK = 15
    PAR_LAT_MU = 16
    PAR_AHARD = 17
    PAR_VMAX = 18

cdef enum:
    MODE_CLOSED_LOOP = 0
    MODE_NO_EGO = 1
    MODE_EGO_VS_FROZEN = 2
    MODE_OPEN_LOOP = 3
    MODE_EXTERNAL_EGO = 4

DEF MAX_AGENTS = 256
DEF HYST = 0.1


cdef inline void _project(const double[::1] lane_x, const double[::1] lane_y,
                          const double[::1] lane_s, int lo, int hi,
                          double px, double py,
                          double* out_s, double* out_d,
                          double* out_tx, double* out_ty) nogil:
    cdef double best = INFINITY
    cdef int bi = lo
    cdef double bt = 0.0
    cdef int i
    cdef double dx, dy, seg2, t, fx, fy, d2, seg
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
    seg = sqrt(dx * dx + dy * dy)
    out_s[0] = lane_s[i] + bt * seg
    out_d[0] = (dx * (py - lane_y[i]) - dy * (px - lane_x[i])) / seg
    out_tx[0] = dx / seg
    out_ty[0] = dy / seg


cdef inline void _point_at(const double[::1] lane_x, const double[::1] lane_y,
                           const double[::1] lane_s, int lo, int hi, double s,
                           double* out_x, double* out_y,
                           double* out_tx, double* out_ty) nogil:
    cdef int i, a, b, m
    cdef double dx, dy, seg, t
    if s <= lane_s[lo]:
        i = lo
    elif s >= lane_s[hi - 1]:
        i = hi - 2
    else:
        a = lo
        b = hi - 1
        while b - a > 1:
            m = (a + b) // 2
            if lane_s[m] <= s:
                a = m
            else:
                b = m
        i = a
    dx = lane_x[i + 1] - lane_x[i]
    dy = lane_y[i + 1] - lane_y[i]
    seg = sqrt(dx * dx + dy * dy)
    t = (s - lane_s[i]) / seg
    out_x[0] = lane_x[i] + t * dx
    out_y[0] = lane_y[i] + t * dy
    out_tx[0] = dx / seg
    out_ty[0] = dy / seg


cdef inline double _idm(double v, double v_lead, double gap, double v_des,
                        double t_hw, double s0, double a_max, double b_comf,
                        double expo, double a_hard, bint has_leader) nogil:
    cdef double dv, s_star, a
    if has_leader:
        if gap <= 0.0:
            return -a_hard
        dv = v - v_lead
        s_star = s0 + v * t_hw + v * dv / (2.0 * sqrt(a_max * b_comf))
        if s_star < s0:
            s_star = s0
        a = a_max * (1.0 - pow(v / v_des, expo) - (s_star / gap) * (s_star / gap))
    else:
        a = a_max * (1.0 - pow(v / v_des, expo))
    if a < -a_hard:
        a = -a_hard
    elif a > a_max:
        a = a_max
    return a


cdef inline void _rk4(double x, double y, double th, double v, double a,
                      double steer, double wb, double dt,
                      double* ox, double* oy, double* oth, double* ov) nogil:
    cdef double tansb = tan(steer) / wb
    cdef double c1x = v * cos(th)
    cdef double c1y = v * sin(th)
    cdef double c1t = v * tansb
    cdef double v2 = v + 0.5 * dt * a
    cdef double th2 = th + 0.5 * dt * c1t
    cdef double c2x = v2 * cos(th2)
    cdef double c2y = v2 * sin(th2)
    cdef double c2t = v2 * tansb
    cdef double th3 = th + 0.5 * dt * c2t
    cdef double c3x = v2 * cos(th3)
    cdef double c3y = v2 * sin(th3)
    cdef double c3t = v2 * tansb
    cdef double v4 = v + dt * a
    cdef double th4 = th + dt * c3t
    cdef double c4x = v4 * cos(th4)
    cdef double c4y = v4 * sin(th4)
    cdef double c4t = v4 * tansb
    ox[0] = x + dt / 6.0 * (c1x + 2.0 * c2x + 2.0 * c3x + c4x)
    oy[0] = y + dt / 6.0 * (c1y + 2.0 * c2y + 2.0 * c3y + c4y)
    oth[0] = th + dt / 6.0 * (c1t + 2.0 * c2t + 2.0 * c3t + c4t)
    ov[0] = v + dt * a


cdef inline void _step_vehicle(double* x, double* y, double* th, double* v,
                               double a, double steer, double wb, double dt) nogil:
    cdef double t_stop
    cdef double nx, ny, nth, nv
    if v[0] <= 0.0 and a <= 0.0:
        v[0] = 0.0
        return
    if a < 0.0 and v[0] + a * dt < 0.0:
        t_stop = v[0] / (-a)
        _rk4(x[0], y[0], th[0], v[0], a, steer, wb, t_stop, &nx, &ny, &nth, &nv)
        x[0] = nx
        y[0] = ny
        th[0] = nth
        v[0] = 0.0
        return
    _rk4(x[0], y[0], th[0], v[0], a, steer, wb, dt, &nx, &ny, &nth, &nv)
    x[0] = nx
    y[0] = ny
    th[0] = nth
    v[0] = nv if nv > 0.0 else 0.0


cdef inline double _rss_lon(double v_rear, double v_front, double rho,
                            double acc, double bmin, double bmax) nogil:
    cdef double v_rho = v_rear + rho * acc
    cdef double d = (v_rear * rho + 0.5 * acc * rho * rho
                     + v_rho * v_rho / (2.0 * bmin)
                     - v_front * v_front / (2.0 * bmax))
    return d if d > 0.0 else 0.0


cdef inline double _rss_lat(double v1, double v2, double rho, double lat_acc,
                            double lat_brk, double mu) nogil:
    cdef double tot = 0.0
    cdef double v, v_rho, c
    cdef int k
    for k in range(2):
        v = v1 if k == 0 else v2
        v_rho = v + rho * lat_acc
        c = 0.5 * (v + v_rho) * rho
        if v_rho > 0.0:
            c += v_rho * v_rho / (2.0 * lat_brk)
        tot += c
    if tot < 0.0:
        tot = 0.0
    return mu + tot


cdef inline double _max_safe_rear_speed(double gap, double v_front, double rho,
                                        double acc, double bmin, double bmax) nogil:
    cdef double rhs = gap + v_front * v_front / (2.0 * bmax) - 0.5 * acc * rho * rho
    cdef double a = 1.0 / (2.0 * bmin)
    cdef double c0 = rho * acc
    cdef double big_b = 2.0 * a * c0 + rho
    cdef double big_c = a * c0 * c0 - rhs
    cdef double disc = big_b * big_b - 4.0 * a * big_c
    cdef double r
    if disc <= 0.0:
        return 0.0
    r = (-big_b + sqrt(disc)) / (2.0 * a)
    return r if r > 0.0 else 0.0


cdef inline double _min_safe_front_speed(double gap, double v_rear, double rho,
                                         double acc, double bmin, double bmax) nogil:
    cdef double vr = v_rear + rho * acc
    cdef double need = (v_rear * rho + 0.5 * acc * rho * rho
                        + vr * vr / (2.0 * bmin) - gap)
    if need <= 0.0:
        return 0.0
    return sqrt(2.0 * bmax * need)


cdef inline bint _rect_overlap(double x1, double y1, double th1, double l1, double w1,
                               double x2, double y2, double th2, double l2, double w2) nogil:
    cdef double c1 = cos(th1)
    cdef double s1 = sin(th1)
    cdef double c2 = cos(th2)
    cdef double s2 = sin(th2)
    cdef double dx = x2 - x1
    cdef double dy = y2 - y1
    cdef double hl1 = 0.5 * l1
    cdef double hw1 = 0.5 * w1
    cdef double hl2 = 0.5 * l2
    cdef double hw2 = 0.5 * w2
    cdef double ax, ay, r1, r2, dist
    cdef int k
    for k in range(4):
        if k == 0:
            ax = c1
            ay = s1
        elif k == 1:
            ax = -s1
            ay = c1
        elif k == 2:
            ax = c2
            ay = s2
        else:
            ax = -s2
            ay = c2
        r1 = hl1 * fabs(ax * c1 + ay * s1) + hw1 * fabs(-ax * s1 + ay * c1)
        r2 = hl2 * fabs(ax * c2 + ay * s2) + hw2 * fabs(-ax * s2 + ay * c2)
        dist = fabs(ax * dx + ay * dy)
        if dist > r1 + r2:
            return False
    return True


def rollout(const double[::1] lane_x, const double[::1] lane_y,
            const double[::1] lane_s, const int[::1] lane_off,
            const double[::1] lane_width,
            const int[::1] stat_lane, const double[::1] stat_s0,
            const double[::1] stat_s1, const double[::1] stat_d0,
            const double[::1] stat_d1,
            const double[:, ::1] st0, const double[:, ::1] geom,
            const int[::1] lane_idx, const double[:, ::1] idm,
            const double[::1] consider_range,
            const int[::1] ego_lane_sched, const double[:, ::1] ego_idm_sched,
            int ego_lane_start,
            const double[::1] par, int mode, int rss_override,
            const double[:, :, ::1] frozen,
            double[:, :, ::1] out_states, double[:, :, ::1] out_ctrl,
            double[:, ::1] out_rss, int n_steps, double dt):
    """Fixed-step multi-agent rollout; see the fallback kernel for semantics."""
    cdef int n_agents = st0.shape[0]
    cdef int n_lanes = lane_width.shape[0]
    cdef int n_stat = stat_lane.shape[0]
    if n_agents > MAX_AGENTS:
        raise ValueError("too many agents for the compiled kernel")

    cdef double xs[MAX_AGENTS]
    cdef double ys[MAX_AGENTS]
    cdef double ths[MAX_AGENTS]
    cdef double vs[MAX_AGENTS]
    cdef double acc[MAX_AGENTS]
    cdef double steer[MAX_AGENTS]
    cdef double proj_s[MAX_AGENTS]

    cdef int i, j, k, step, li, lo, hi, lo2, hi2, lo_t, hi_t, lo_r, hi_r, lo_s, hi_s
    cdef int ego_cur = ego_lane_start
    cdef bint interact = mode != MODE_OPEN_LOOP
    cdef bint visible_ego = mode != MODE_NO_EGO
    cdef bint control_ego = (mode == MODE_CLOSED_LOOP or mode == MODE_EGO_VS_FROZEN
                             or mode == MODE_OPEN_LOOP)
    cdef int collision = -1
    cdef int rest, lane_t, ref_lane
    cdef double s, d, tx, ty
    cdef double lead_s, lead_v, lead_len, sj, dj, gap, a_cmd, a_idm, d_cmd
    cdef double s_c, d_c, s2, d2, s_t, d_t
    cdef double f_s, f_v, f_len, r_s, r_v, r_len
    cdef double s_des, v_des, s_tr, s_tf, a_track
    cdef bint space_free, has_lead
    cdef double blk_lo, blk_hi, l_oc, half_t, side, edge, c, extra, d_g2, toward
    cdef double ref_off, ld, s_r0, ttx, tty, tcx, tcy, alpha
    cdef double se, de, vs_e, vd_e
    cdef bint dangerous, blk_l, blk_r, haz_left
    cdef double v_lb, v_ub, a_hi, rho, amx, bmn, bmx
    cdef double lnj, wdj, vsj, vdj, jcx, jcy, gap_lon, d_lon, gap_lat, d_lat
    cdef double toward_haz, ub, lb, cx, cy, ncx, ncy, dmid, sc
    cdef double new_a, new_d

    for i in range(n_agents):
        xs[i] = st0[i, 0]
        ys[i] = st0[i, 1]
        ths[i] = st0[i, 2]
        vs[i] = st0[i, 3]
        acc[i] = 0.0
        steer[i] = 0.0
        out_states[0, i, 0] = xs[i]
        out_states[0, i, 1] = ys[i]
        out_states[0, i, 2] = ths[i]
        out_states[0, i, 3] = vs[i]

    for step in range(n_steps):
        for i in range(n_agents):
            lo = lane_off[lane_idx[i]]
            hi = lane_off[lane_idx[i] + 1]
            _project(lane_x, lane_y, lane_s, lo, hi, xs[i], ys[i], &s, &d, &tx, &ty)
            proj_s[i] = s

        # --- background agents -------------------------------------------
        for i in range(1, n_agents):
            if mode == MODE_EGO_VS_FROZEN:
                continue
            li = lane_idx[i]
            lo = lane_off[li]
            hi = lane_off[li + 1]
            s = proj_s[i]
            lead_s = INFINITY
            lead_v = 0.0
            lead_len = 0.0
            if interact:
                for j in range(n_agents):
                    if j == i or (j == 0 and not visible_ego):
                        continue
                    _project(lane_x, lane_y, lane_s, lo, hi, xs[j], ys[j],
                             &sj, &dj, &tx, &ty)
                    if fabs(dj) <= consider_range[i] and sj > s and sj < lead_s:
                        lead_s = sj
                        lead_v = vs[j]
                        lead_len = geom[j, 0]
                for k in range(n_stat):
                    if stat_lane[k] != li:
                        continue
                    sc = 0.5 * (stat_s0[k] + stat_s1[k])
                    if sc > s and sc < lead_s:
                        lead_s = sc
                        lead_v = 0.0
                        lead_len = stat_s1[k] - stat_s0[k]
            has_lead = lead_s < INFINITY
            gap = (lead_s - 0.5 * lead_len) - (s + 0.5 * geom[i, 0]) if has_lead else 0.0
            a_cmd = _idm(vs[i], lead_v, gap, idm[i, 0], idm[i, 1], idm[i, 2],
                         idm[i, 3], idm[i, 4], idm[i, 5], par[PAR_AHARD], has_lead)
            ld = par[PAR_LD_GAIN] * vs[i]
            if ld < par[PAR_LD_MIN]:
                ld = par[PAR_LD_MIN]
            elif ld > par[PAR_LD_MAX]:
                ld = par[PAR_LD_MAX]
            _point_at(lane_x, lane_y, lane_s, lo, hi, s + ld, &ttx, &tty, &tcx, &tcy)
            alpha = atan2(tty - ys[i], ttx - xs[i]) - ths[i]
            alpha = atan2(sin(alpha), cos(alpha))
            d_cmd = atan2(2.0 * geom[i, 2] * sin(alpha), ld)
            if d_cmd > par[PAR_STEER_MAX]:
                d_cmd = par[PAR_STEER_MAX]
            elif d_cmd < -par[PAR_STEER_MAX]:
                d_cmd = -par[PAR_STEER_MAX]
            acc[i] = a_cmd
            steer[i] = d_cmd

        # --- ego ----------------------------------------------------------
        if control_ego:
            lane_t = ego_lane_sched[step]
            lo = lane_off[ego_cur]
            hi = lane_off[ego_cur + 1]
            _project(lane_x, lane_y, lane_s, lo, hi, xs[0], ys[0], &s_c, &d_c, &tx, &ty)
            for li in range(n_lanes):
                if li == ego_cur:
                    continue
                lo2 = lane_off[li]
                hi2 = lane_off[li + 1]
                _project(lane_x, lane_y, lane_s, lo2, hi2, xs[0], ys[0],
                         &s2, &d2, &tx, &ty)
                if fabs(d2) < fabs(d_c) - HYST:
                    ego_cur = li
                    s_c = s2
                    d_c = d2
            lo = lane_off[ego_cur]
            hi = lane_off[ego_cur + 1]

            lead_s = INFINITY
            lead_v = 0.0
            lead_len = 0.0
            if interact:
                for j in range(1, n_agents):
                    _project(lane_x, lane_y, lane_s, lo, hi, xs[j], ys[j],
                             &sj, &dj, &tx, &ty)
                    if fabs(dj) <= consider_range[0] and sj > s_c and sj < lead_s:
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
            has_lead = lead_s < INFINITY
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
                _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[0], ys[0],
                         &s_t, &d_t, &tx, &ty)
                f_s = INFINITY
                f_v = 0.0
                f_len = 0.0
                r_s = -INFINITY
                r_v = 0.0
                r_len = 0.0
                if interact:
                    for j in range(1, n_agents):
                        _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[j], ys[j],
                                 &sj, &dj, &tx, &ty)
                        if fabs(dj) > consider_range[0]:
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
                if r_s > -INFINITY:
                    s_tr = (r_s + 0.5 * r_len) + par[PAR_LMIN] + par[PAR_TSAFE] * r_v
                    if s_tr > s_des:
                        s_des = s_tr
                    if r_v > v_des:
                        v_des = r_v
                if f_s < INFINITY:
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
                space_free = True
                blk_lo = s_t - 0.5 * geom[0, 0] - par[PAR_LMIN]
                blk_hi = s_t + 0.5 * geom[0, 0] + par[PAR_LMIN]
                l_oc = INFINITY
                if interact:
                    half_t = 0.5 * lane_width[lane_t]
                    side = -1.0 if d_t < 0.0 else 1.0
                    for j in range(1, n_agents):
                        _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[j], ys[j],
                                 &sj, &dj, &tx, &ty)
                        if fabs(dj) > half_t:
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
                    if l_oc == INFINITY:
                        l_oc = 0.0
                    extra = par[PAR_LSAFE] - l_oc
                    if extra < 0.0:
                        extra = 0.0
                    d_g2 = 0.5 * lane_width[ego_cur] - 0.5 * geom[0, 1] - extra
                    toward = 1.0 if d_t < 0.0 else -1.0
                    ref_lane = ego_cur
                    ref_off = toward * d_g2

            ld = par[PAR_LD_GAIN] * vs[0]
            if ld < par[PAR_LD_MIN]:
                ld = par[PAR_LD_MIN]
            elif ld > par[PAR_LD_MAX]:
                ld = par[PAR_LD_MAX]
            lo_r = lane_off[ref_lane]
            hi_r = lane_off[ref_lane + 1]
            _project(lane_x, lane_y, lane_s, lo_r, hi_r, xs[0], ys[0],
                     &s_r0, &d2, &tx, &ty)
            _point_at(lane_x, lane_y, lane_s, lo_r, hi_r, s_r0 + ld,
                      &ttx, &tty, &tcx, &tcy)
            ttx -= ref_off * tcy
            tty += ref_off * tcx
            alpha = atan2(tty - ys[0], ttx - xs[0]) - ths[0]
            alpha = atan2(sin(alpha), cos(alpha))
            d_cmd = atan2(2.0 * geom[0, 2] * sin(alpha), ld)
            if d_cmd > par[PAR_STEER_MAX]:
                d_cmd = par[PAR_STEER_MAX]
            elif d_cmd < -par[PAR_STEER_MAX]:
                d_cmd = -par[PAR_STEER_MAX]

            out_rss[step, 0] = 0.0
            out_rss[step, 1] = 0.0
            out_rss[step, 2] = par[PAR_VMAX]
            out_rss[step, 3] = 0.0
            if interact:
                lo_t = lane_off[lane_t]
                hi_t = lane_off[lane_t + 1]
                _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[0], ys[0],
                         &se, &de, &tcx, &tcy)
                vs_e = vs[0] * (cos(ths[0]) * tcx + sin(ths[0]) * tcy)
                vd_e = vs[0] * (sin(ths[0]) * tcx - cos(ths[0]) * tcy)
                dangerous = False
                v_lb = 0.0
                v_ub = par[PAR_VMAX]
                a_hi = INFINITY
                blk_l = False
                blk_r = False
                rho = par[PAR_RHO]
                amx = par[PAR_ACC_MAX]
                bmn = par[PAR_BRK_MIN]
                bmx = par[PAR_BRK_MAX]
                for j in range(1, n_agents + n_stat):
                    if j < n_agents:
                        _project(lane_x, lane_y, lane_s, lo_t, hi_t, xs[j], ys[j],
                                 &sj, &dj, &jcx, &jcy)
                        lnj = geom[j, 0]
                        wdj = geom[j, 1]
                        vsj = vs[j] * (cos(ths[j]) * jcx + sin(ths[j]) * jcy)
                        vdj = vs[j] * (sin(ths[j]) * jcx - cos(ths[j]) * jcy)
                    else:
                        k = j - n_agents
                        if stat_lane[k] != lane_t and stat_lane[k] != ego_cur:
                            continue
                        lo_s = lane_off[stat_lane[k]]
                        hi_s = lane_off[stat_lane[k] + 1]
                        _point_at(lane_x, lane_y, lane_s, lo_s, hi_s,
                                  0.5 * (stat_s0[k] + stat_s1[k]),
                                  &cx, &cy, &ncx, &ncy)
                        dmid = 0.5 * (stat_d0[k] + stat_d1[k])
                        cx -= dmid * ncy
                        cy += dmid * ncx
                        _project(lane_x, lane_y, lane_s, lo_t, hi_t, cx, cy,
                                 &sj, &dj, &jcx, &jcy)
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
                    gap_lat = fabs(de - dj) - 0.5 * (geom[0, 1] + wdj)
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
                        if a_hi < INFINITY and new_a > a_hi:
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
                pass
            elif i > 0 and mode == MODE_EGO_VS_FROZEN:
                xs[i] = frozen[step + 1, i, 0]
                ys[i] = frozen[step + 1, i, 1]
                ths[i] = frozen[step + 1, i, 2]
                vs[i] = frozen[step + 1, i, 3]
            else:
                _step_vehicle(&xs[i], &ys[i], &ths[i], &vs[i], acc[i], steer[i],
                              geom[i, 2], dt)
            out_states[step + 1, i, 0] = xs[i]
            out_states[step + 1, i, 1] = ys[i]
            out_states[step + 1, i, 2] = ths[i]
            out_states[step + 1, i, 3] = vs[i]
            out_ctrl[step, i, 0] = acc[i]
            out_ctrl[step, i, 1] = steer[i]

        # --- collision test -------------------------------------------------
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
                    _point_at(lane_x, lane_y, lane_s, lo_s, hi_s,
                              0.5 * (stat_s0[k] + stat_s1[k]), &cx, &cy, &ncx, &ncy)
                    dmid = 0.5 * (stat_d0[k] + stat_d1[k])
                    cx -= dmid * ncy
                    cy += dmid * ncx
                    if _rect_overlap(xs[0], ys[0], ths[0], geom[0, 0], geom[0, 1],
                                     cx, cy, atan2(ncy, ncx),
                                     stat_s1[k] - stat_s0[k], stat_d1[k] - stat_d0[k]):
                        collision = step
                        break
            if collision >= 0:
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

"""Fixed-step integration kernels (numba).

Both kernels integrate over whole steps of ``dt`` starting at ``t0``; ``dt``
divides the drive period so per-period accumulators close exactly on step
boundaries. Accumulator columns (trapezoidal integrals, divided by the period
on return) are listed in ``ACC_COLUMNS``.
"""

import math

import numpy as np
from numba import njit

ACC_COLUMNS = ("p_load", "p_in", "p_damp", "v_s", "v_c", "i_s", "i_c", "p_dc")
N_ACC = len(ACC_COLUMNS)
TRACE_COLUMNS = ("t", "accel", "v_load", "i_load", "p_dc", "x", "x_dot", "v_e", "sw")
N_TRACE = len(TRACE_COLUMNS)

# behavioral load modes
SHUNT_ODE = 0
SHUNT_ALGEBRAIC = 1
GENERATOR = 2

# switch states
HIGH = 1
LOW = -1
DEAD = 0


@njit(cache=True)
def _amplitude(t, seg_ends, seg_amps):
    idx = np.searchsorted(seg_ends, t, side="right")
    if idx >= seg_amps.shape[0]:
        idx = seg_amps.shape[0] - 1
    return seg_amps[idx]


# -- behavioral ---------------------------------------------------------------
# p = [m, d, k, alpha, c_p, g, c_extra, inv_l, omega, g_accel, mode, v_gen, phi_gen]


@njit(cache=True)
def _beh_voltage(t, y, p):
    mode = int(p[10])
    if mode == GENERATOR:
        return p[11] * math.sin(p[8] * t + p[12])
    if mode == SHUNT_ALGEBRAIC:
        return (p[3] * y[1] - y[3]) / p[5]
    return y[2]


@njit(cache=True)
def _beh_deriv(t, y, amp, p, out):
    m, d, k, alpha, c_p = p[0], p[1], p[2], p[3], p[4]
    g, c_extra, inv_l, omega = p[5], p[6], p[7], p[8]
    mode = int(p[10])
    v = _beh_voltage(t, y, p)
    acc = p[9] * amp * math.sin(omega * t)
    out[0] = y[1]
    out[1] = acc - (d * y[1] + k * y[0] + alpha * v) / m
    out[3] = v * inv_l
    if mode == SHUNT_ODE:
        out[2] = (alpha * y[1] - g * v - y[3]) / (c_p + c_extra)
    else:
        out[2] = 0.0


@njit(cache=True)
def _beh_outputs(t, y, amp, p, scratch):
    """Return (v, i_load, p_in, p_damp, accel_g)."""
    m, d, alpha, c_p = p[0], p[1], p[3], p[4]
    g, c_extra, omega = p[5], p[6], p[8]
    mode = int(p[10])
    v = _beh_voltage(t, y, p)
    _beh_deriv(t, y, amp, p, scratch)
    if mode == SHUNT_ODE:
        i_load = g * v + c_extra * scratch[2] + y[3]
    elif mode == SHUNT_ALGEBRAIC:
        dv = (alpha * scratch[1] - scratch[3]) / g
        i_load = alpha * y[1] - c_p * dv
    else:
        dv = p[11] * omega * math.cos(omega * t + p[12])
        i_load = alpha * y[1] - c_p * dv
    s = math.sin(omega * t)
    accel_si = p[9] * amp * s
    return v, i_load, m * accel_si * y[1], d * y[1] * y[1], amp * s


@njit(cache=True)
def run_behavioral(y0, t0, n_steps, dt, steps_per_period, decim, p, seg_ends, seg_amps):
    """RK4 over ``n_steps``; returns (y_end, period_acc, trace)."""
    y = y0.copy()
    n_periods = n_steps // steps_per_period
    acc = np.zeros((n_periods, N_ACC))
    n_rec = n_steps // decim + 1
    trace = np.zeros((n_rec, N_TRACE))
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    scratch = np.empty(4)
    omega = p[8]
    mode = int(p[10])

    t = t0
    amp = _amplitude(t, seg_ends, seg_amps)
    v, il, pin, pd, ag = _beh_outputs(t, y, amp, p, scratch)
    if mode != SHUNT_ODE:
        y[2] = v
    s, c = math.sin(omega * t), math.cos(omega * t)
    prev = (v * il, pin, pd, v * s, v * c, il * s, il * c, v * il)
    trace[0, 0], trace[0, 1], trace[0, 2], trace[0, 3] = t, ag, v, il
    trace[0, 4], trace[0, 5], trace[0, 6] = v * il, y[0], y[1]
    rec = 1
    for n in range(n_steps):
        h = dt
        t = t0 + n * dt
        amp = _amplitude(t + 0.5 * h, seg_ends, seg_amps)
        _beh_deriv(t, y, amp, p, k1)
        for j in range(4):
            tmp[j] = y[j] + 0.5 * h * k1[j]
        _beh_deriv(t + 0.5 * h, tmp, amp, p, k2)
        for j in range(4):
            tmp[j] = y[j] + 0.5 * h * k2[j]
        _beh_deriv(t + 0.5 * h, tmp, amp, p, k3)
        for j in range(4):
            tmp[j] = y[j] + h * k3[j]
        _beh_deriv(t + h, tmp, amp, p, k4)
        for j in range(4):
            y[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
        t = t0 + (n + 1) * dt
        v, il, pin, pd, ag = _beh_outputs(t, y, amp, p, scratch)
        if mode != SHUNT_ODE:
            y[2] = v
        for j in range(4):
            if not math.isfinite(y[j]):
                raise FloatingPointError("non-finite state")
        s, c = math.sin(omega * t), math.cos(omega * t)
        cur = (v * il, pin, pd, v * s, v * c, il * s, il * c, v * il)
        per = n // steps_per_period
        if per < n_periods:
            for j in range(N_ACC):
                acc[per, j] += 0.5 * h * (prev[j] + cur[j])
        prev = cur
        if (n + 1) % decim == 0 and rec < n_rec:
            trace[rec, 0], trace[rec, 1], trace[rec, 2], trace[rec, 3] = t, ag, v, il
            trace[rec, 4], trace[rec, 5], trace[rec, 6] = v * il, y[0], y[1]
            rec += 1
    period = steps_per_period * dt
    return y, acc / period, trace[:rec]


# -- switched -----------------------------------------------------------------
# q = [m, d, k, alpha, c_p, omega, g_accel, l_b, r_m, v_dc, v_n, diode_drop,
#      r_x, r_y, r_f, c_x, divider, w_d, exact(1/0), v_th, v_tl, dead_time]
# y = [x, x_dot, v, i, z]


@njit(cache=True)
def _ve(y, q):
    v, i, z = y[2], y[3], y[4]
    r_m, r_x, r_y, r_f, c_x, kdiv, w_d = q[8], q[12], q[13], q[14], q[15], q[16], q[17]
    if q[18] > 0.5:
        vm = kdiv * v
        ix = (v - vm - z) / r_x
        return vm - r_f * ((r_m * i - vm) / r_y + ix)
    deriv = w_d * (v - z)
    return -r_f * r_m / r_y * i - r_f * c_x * deriv + kdiv * (1 + r_f / r_y) * v


@njit(cache=True)
def _sw_deriv(t, y, amp, q, v_sw, hold, out):
    m, d, k, alpha, c_p, omega = q[0], q[1], q[2], q[3], q[4], q[5]
    l_b, r_m = q[7], q[8]
    v = y[2]
    i = y[3]
    out[0] = y[1]
    out[1] = q[6] * amp * math.sin(omega * t) - (d * y[1] + k * y[0] + alpha * v) / m
    out[2] = (alpha * y[1] - i) / c_p
    if hold:
        out[3] = 0.0
    else:
        out[3] = (v - r_m * i - v_sw) / l_b
    if q[18] > 0.5:
        kdiv = q[16]
        out[4] = (v - kdiv * v - y[4]) / q[12] / q[15]
    else:
        out[4] = q[17] * (v - y[4])


@njit(cache=True)
def _sw_rk4(t, y, h, amp, q, v_sw, hold, k1, k2, k3, k4, tmp, out):
    _sw_deriv(t, y, amp, q, v_sw, hold, k1)
    for j in range(5):
        tmp[j] = y[j] + 0.5 * h * k1[j]
    _sw_deriv(t + 0.5 * h, tmp, amp, q, v_sw, hold, k2)
    for j in range(5):
        tmp[j] = y[j] + 0.5 * h * k2[j]
    _sw_deriv(t + 0.5 * h, tmp, amp, q, v_sw, hold, k3)
    for j in range(5):
        tmp[j] = y[j] + h * k3[j]
    _sw_deriv(t + h, tmp, amp, q, v_sw, hold, k4)
    for j in range(5):
        out[j] = y[j] + h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])


@njit(cache=True)
def run_switched(y0, t0, n_steps, dt, steps_per_period, decim, q, seg_ends, seg_amps):
    """Hysteretic current-mode converter with dead time.

    Returns (y_end, period_acc, trace, stats) with
    stats = [n_switch, min_interval, ve_excess_hi, ve_excess_lo].
    """
    m, d, omega, g_accel = q[0], q[1], q[5], q[6]
    v_dc, v_n, vd = q[9], q[10], q[11]
    v_th, v_tl, dead_time = q[19], q[20], q[21]

    y = y0.copy()
    y1 = np.empty(5)
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    tmp = np.empty(5)
    n_periods = n_steps // steps_per_period
    acc = np.zeros((n_periods, N_ACC))
    n_rec = n_steps // decim + 1
    trace = np.zeros((n_rec, N_TRACE))

    comp = HIGH
    sw = HIGH
    t_dead_end = -1.0
    last_flip = -1.0
    n_switch = 0
    min_interval = 1e30
    exc_hi = 0.0
    exc_lo = 0.0

    t = t0
    ve = _ve(y, q)
    trace[0, 0] = t
    trace[0, 2], trace[0, 3], trace[0, 5], trace[0, 6], trace[0, 7] = y[2], y[3], y[0], y[1], ve
    trace[0, 8] = sw
    rec = 1
    p_dc_now = 0.0
    for n in range(n_steps):
        t_end = t0 + (n + 1) * dt
        per = n // steps_per_period
        guard = 0
        while t < t_end:
            guard += 1
            if guard > 64:
                raise FloatingPointError("event loop did not advance")
            h = t_end - t
            if h < 1e-15 * dt:
                t = t_end
                break
            if sw == DEAD and t_dead_end - t < h:
                h = t_dead_end - t
                if h <= 0.0:
                    sw = comp
                    continue
            # rail seen by the inductor during this sub-step
            hold = False
            i0 = y[3]
            if sw == HIGH:
                v_sw = v_dc
                rail = v_dc
            elif sw == LOW:
                v_sw = -v_n
                rail = -v_n
            elif i0 > 0.0:
                v_sw = v_dc + vd
                rail = v_dc
            elif i0 < 0.0:
                v_sw = -v_n - vd
                rail = -v_n
            else:
                v0 = y[2]
                if v0 > v_dc + vd:
                    v_sw = v_dc + vd
                    rail = v_dc
                elif v0 < -v_n - vd:
                    v_sw = -v_n - vd
                    rail = -v_n
                else:
                    hold = True
                    v_sw = 0.0
                    rail = 0.0
            amp = _amplitude(t + 0.5 * h, seg_ends, seg_amps)
            _sw_rk4(t, y, h, amp, q, v_sw, hold, k1, k2, k3, k4, tmp, y1)
            ve0 = _ve(y, q)
            ve1 = _ve(y1, q)
            theta = 2.0
            event = 0
            if comp == HIGH:
                if ve0 > v_th:
                    theta, event = 0.0, 1
                elif ve1 > v_th:
                    theta, event = (v_th - ve0) / (ve1 - ve0), 1
            else:
                if ve0 < v_tl:
                    theta, event = 0.0, 1
                elif ve1 < v_tl:
                    theta, event = (v_tl - ve0) / (ve1 - ve0), 1
            if sw == DEAD and not hold and i0 * y1[3] < 0.0:
                tz = i0 / (i0 - y1[3])
                if tz < theta:
                    theta, event = tz, 2
            if event != 0 and theta < 1.0:
                h = theta * h
                if h > 0.0:
                    _sw_rk4(t, y, h, amp, q, v_sw, hold, k1, k2, k3, k4, tmp, y1)
                else:
                    for j in range(5):
                        y1[j] = y[j]
            else:
                event = 0
            if h > 0.0:
                s0, c0 = math.sin(omega * t), math.cos(omega * t)
                s1, c1 = math.sin(omega * (t + h)), math.cos(omega * (t + h))
                a0 = g_accel * amp * s0
                a1 = g_accel * amp * s1
                if event == 2:
                    y1[3] = 0.0
                if per < n_periods:
                    acc[per, 0] += 0.5 * h * (y[2] * y[3] + y1[2] * y1[3])
                    acc[per, 1] += 0.5 * h * m * (a0 * y[1] + a1 * y1[1])
                    acc[per, 2] += 0.5 * h * d * (y[1] * y[1] + y1[1] * y1[1])
                    acc[per, 3] += 0.5 * h * (y[2] * s0 + y1[2] * s1)
                    acc[per, 4] += 0.5 * h * (y[2] * c0 + y1[2] * c1)
                    acc[per, 5] += 0.5 * h * (y[3] * s0 + y1[3] * s1)
                    acc[per, 6] += 0.5 * h * (y[3] * c0 + y1[3] * c1)
                    acc[per, 7] += 0.5 * h * rail * (y[3] + y1[3])
                p_dc_now = rail * y1[3]
                for j in range(5):
                    y[j] = y1[j]
                t = t + h
            elif event == 2:
                y[3] = 0.0
            for j in range(5):
                if not math.isfinite(y[j]):
                    raise FloatingPointError("non-finite state")
            if event == 1:
                comp = -comp
                if last_flip >= 0.0:
                    interval = t - last_flip
                    if interval < min_interval:
                        min_interval = interval
                last_flip = t
                n_switch += 1
                if dead_time > 0.0:
                    sw = DEAD
                    t_dead_end = t + dead_time
                else:
                    sw = comp
            elif sw == DEAD and t >= t_dead_end:
                sw = comp
            if sw != DEAD and event == 0:
                ve_now = _ve(y, q)
                if ve_now - v_th > exc_hi:
                    exc_hi = ve_now - v_th
                if v_tl - ve_now > exc_lo:
                    exc_lo = v_tl - ve_now
        t = t_end
        if (n + 1) % decim == 0 and rec < n_rec:
            amp_r = _amplitude(t, seg_ends, seg_amps)
            trace[rec, 0] = t
            trace[rec, 1] = amp_r * math.sin(omega * t)
            trace[rec, 2], trace[rec, 3] = y[2], y[3]
            trace[rec, 4] = p_dc_now
            trace[rec, 5], trace[rec, 6] = y[0], y[1]
            trace[rec, 7] = _ve(y, q)
            trace[rec, 8] = sw
            rec += 1
    stats = np.array([n_switch, min_interval, exc_hi, exc_lo])
    period = steps_per_period * dt
    return y, acc / period, trace[:rec], stats

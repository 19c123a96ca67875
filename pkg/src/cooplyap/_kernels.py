"""Compiled inner loops of the fixed-step integrators.

All kernels run classical fourth-order Runge-Kutta.  The simplex state is
clipped and mass-renormalized after every step; the log of the accumulated
growth factor advances through the same RK4 stage values (for a pure time
integrand this reduces to Simpson's rule).  Matrix kernels integrate the
linear equation M' = A M and renormalize each column to unit mass, storing
the log of the removed factor per column.

Vector kernels also accumulate the plain trapezoid of the mass growth rate
<A theta, 1> sampled at every integration node (sub-split at jumps), which
is the quadrature behind the sampled-integrand exponent estimate; keeping
it at full step resolution avoids aliasing when records are thinned.

Status codes returned by every driver: 0 success, 1 a coordinate fell below
the clip floor, 2 a renormalization sum was nonpositive.  fastmath stays
off so results are bit-reproducible.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _eval_fourier(base, cosc, sinc, phases, out):
    d = base.shape[0]
    for a in range(d):
        for b in range(d):
            out[a, b] = base[a, b]
    n = cosc.shape[0]
    n_harm = cosc.shape[1]
    for i in range(n):
        ph = phases[i] % 1.0
        for k in range(n_harm):
            ang = TWO_PI * (k + 1) * ph
            cc = math.cos(ang)
            ss = math.sin(ang)
            for a in range(d):
                for b in range(d):
                    out[a, b] += cosc[i, k, a, b] * cc + sinc[i, k, a, b] * ss


@njit(cache=True)
def _field(a_mat, theta, out):
    # out = A theta - <A theta, 1> theta; returns the mass growth rate <A theta, 1>
    d = theta.shape[0]
    g = 0.0
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += a_mat[i, j] * theta[j]
        out[i] = acc
        g += acc
    for i in range(d):
        out[i] -= g * theta[i]
    return g


@njit(cache=True)
def _rk4_const(a_mat, theta, h, k1, k2, k3, k4, tmp):
    d = theta.shape[0]
    g1 = _field(a_mat, theta, k1)
    for i in range(d):
        tmp[i] = theta[i] + 0.5 * h * k1[i]
    g2 = _field(a_mat, tmp, k2)
    for i in range(d):
        tmp[i] = theta[i] + 0.5 * h * k2[i]
    g3 = _field(a_mat, tmp, k3)
    for i in range(d):
        tmp[i] = theta[i] + h * k3[i]
    g4 = _field(a_mat, tmp, k4)
    for i in range(d):
        theta[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)


@njit(cache=True)
def _rk4_smooth(base, cosc, sinc, phases0, speeds, t, h, theta,
                a1, a2, a3, ph, k1, k2, k3, k4, tmp):
    n = phases0.shape[0]
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * t
    _eval_fourier(base, cosc, sinc, ph, a1)
    tm = t + 0.5 * h
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * tm
    _eval_fourier(base, cosc, sinc, ph, a2)
    te = t + h
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * te
    _eval_fourier(base, cosc, sinc, ph, a3)
    d = theta.shape[0]
    g1 = _field(a1, theta, k1)
    for i in range(d):
        tmp[i] = theta[i] + 0.5 * h * k1[i]
    g2 = _field(a2, tmp, k2)
    for i in range(d):
        tmp[i] = theta[i] + 0.5 * h * k2[i]
    g3 = _field(a2, tmp, k3)
    for i in range(d):
        tmp[i] = theta[i] + h * k3[i]
    g4 = _field(a3, tmp, k4)
    for i in range(d):
        theta[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)


@njit(cache=True)
def _mass_rate(a_mat, theta):
    d = theta.shape[0]
    g = 0.0
    for i in range(d):
        for j in range(d):
            g += a_mat[i, j] * theta[j]
    return g


@njit(cache=True)
def _clip_normalize(theta, floor):
    d = theta.shape[0]
    s = 0.0
    for i in range(d):
        v = theta[i]
        if v < 0.0:
            if v < floor:
                return 1
            theta[i] = 0.0
            v = 0.0
        s += v
    if s <= 0.0:
        return 2
    inv = 1.0 / s
    for i in range(d):
        theta[i] *= inv
    return 0


@njit(cache=True)
def _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, t, theta, ell, trap):
    rec_t[ridx] = t
    for i in range(theta.shape[0]):
        rec_theta[ridx, i] = theta[i]
    rec_ell[ridx] = ell
    rec_trap[ridx] = trap


@njit(cache=True)
def drive_smooth_vec(base, cosc, sinc, phases0, speeds, theta, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_theta, rec_ell, rec_trap):
    d = theta.shape[0]
    n = phases0.shape[0]
    a1 = np.empty((d, d))
    a2 = np.empty((d, d))
    a3 = np.empty((d, d))
    ph = np.empty(n)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ell = 0.0
    trap = 0.0
    _eval_fourier(base, cosc, sinc, phases0, a1)
    g_cur = _mass_rate(a1, theta)
    _record_vec(rec_t, rec_theta, rec_ell, rec_trap, 0, 0.0, theta, ell, trap)
    ridx = 1
    for k in range(1, n_full + 1):
        t0 = (k - 1) * step
        ell += _rk4_smooth(base, cosc, sinc, phases0, speeds, t0, step, theta,
                           a1, a2, a3, ph, k1, k2, k3, k4, tmp)
        st = _clip_normalize(theta, floor)
        if st != 0:
            return st
        # a3 still holds the matrix at the new node time
        g_new = _mass_rate(a3, theta)
        trap += 0.5 * step * (g_cur + g_new)
        g_cur = g_new
        if k % thin == 0:
            _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, k * step, theta, ell, trap)
            ridx += 1
    if tail != 0:
        t0 = n_full * step
        ell += _rk4_smooth(base, cosc, sinc, phases0, speeds, t0, horizon - t0, theta,
                           a1, a2, a3, ph, k1, k2, k3, k4, tmp)
        st = _clip_normalize(theta, floor)
        if st != 0:
            return st
        g_new = _mass_rate(a3, theta)
        trap += 0.5 * (horizon - t0) * (g_cur + g_new)
        _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, horizon, theta, ell, trap)
    elif n_full % thin != 0:
        _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, n_full * step, theta, ell, trap)
    return 0


@njit(cache=True)
def drive_markov_vec(mats, states, jump_times, theta, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_theta, rec_ell, rec_trap):
    d = theta.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ell = 0.0
    trap = 0.0
    _record_vec(rec_t, rec_theta, rec_ell, rec_trap, 0, 0.0, theta, ell, trap)
    ridx = 1
    nj = jump_times.shape[0]
    j = 0
    pos = 0.0
    tiny = step * 1e-9
    total_nodes = n_full + (1 if tail != 0 else 0)
    for node in range(1, total_nodes + 1):
        target = node * step if node <= n_full else horizon
        if target > horizon:
            target = horizon
        while j < nj and jump_times[j] < target - tiny:
            h = jump_times[j] - pos
            if h > tiny:
                g_l = _mass_rate(mats[states[j]], theta)
                ell += _rk4_const(mats[states[j]], theta, h, k1, k2, k3, k4, tmp)
                st = _clip_normalize(theta, floor)
                if st != 0:
                    return st
                trap += 0.5 * h * (g_l + _mass_rate(mats[states[j]], theta))
            if jump_times[j] > pos:
                pos = jump_times[j]
            j += 1
        h = target - pos
        if h > tiny:
            g_l = _mass_rate(mats[states[j]], theta)
            ell += _rk4_const(mats[states[j]], theta, h, k1, k2, k3, k4, tmp)
            st = _clip_normalize(theta, floor)
            if st != 0:
                return st
            trap += 0.5 * h * (g_l + _mass_rate(mats[states[j]], theta))
        pos = target
        if node <= n_full:
            if node % thin == 0:
                _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, target, theta, ell, trap)
                ridx += 1
        else:
            _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, horizon, theta, ell, trap)
    if tail == 0 and n_full % thin != 0:
        _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, n_full * step, theta, ell, trap)
    return 0


@njit(cache=True)
def drive_frozen_vec(base, cosc, sinc, svals, theta, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_theta, rec_ell, rec_trap):
    d = theta.shape[0]
    a_mat = np.empty((d, d))
    ph = np.empty(1)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ell = 0.0
    trap = 0.0
    _record_vec(rec_t, rec_theta, rec_ell, rec_trap, 0, 0.0, theta, ell, trap)
    ridx = 1
    for k in range(1, n_full + 1):
        ph[0] = svals[k - 1]
        _eval_fourier(base, cosc, sinc, ph, a_mat)
        g_l = _mass_rate(a_mat, theta)
        ell += _rk4_const(a_mat, theta, step, k1, k2, k3, k4, tmp)
        st = _clip_normalize(theta, floor)
        if st != 0:
            return st
        trap += 0.5 * step * (g_l + _mass_rate(a_mat, theta))
        if k % thin == 0:
            _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, k * step, theta, ell, trap)
            ridx += 1
    if tail != 0:
        ph[0] = svals[n_full]
        _eval_fourier(base, cosc, sinc, ph, a_mat)
        h = horizon - n_full * step
        g_l = _mass_rate(a_mat, theta)
        ell += _rk4_const(a_mat, theta, h, k1, k2, k3, k4, tmp)
        st = _clip_normalize(theta, floor)
        if st != 0:
            return st
        trap += 0.5 * h * (g_l + _mass_rate(a_mat, theta))
        _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, horizon, theta, ell, trap)
    elif n_full % thin != 0:
        _record_vec(rec_t, rec_theta, rec_ell, rec_trap, ridx, n_full * step, theta, ell, trap)
    return 0


# ---------------------------------------------------------------------------
# matrix equation M' = A M with per-column renormalization


@njit(cache=True)
def _mat_product(a_mat, m, out):
    d = a_mat.shape[0]
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for l in range(d):
                acc += a_mat[i, l] * m[l, j]
            out[i, j] = acc


@njit(cache=True)
def _rk4_const_mat(a_mat, m, h, s1, s2, s3, s4, tmp):
    d = a_mat.shape[0]
    _mat_product(a_mat, m, s1)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + 0.5 * h * s1[i, j]
    _mat_product(a_mat, tmp, s2)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + 0.5 * h * s2[i, j]
    _mat_product(a_mat, tmp, s3)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + h * s3[i, j]
    _mat_product(a_mat, tmp, s4)
    for i in range(d):
        for j in range(d):
            m[i, j] += (h / 6.0) * (s1[i, j] + 2.0 * s2[i, j] + 2.0 * s3[i, j] + s4[i, j])


@njit(cache=True)
def _rk4_smooth_mat(base, cosc, sinc, phases0, speeds, t, h, m,
                    a1, a2, a3, ph, s1, s2, s3, s4, tmp):
    n = phases0.shape[0]
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * t
    _eval_fourier(base, cosc, sinc, ph, a1)
    tm = t + 0.5 * h
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * tm
    _eval_fourier(base, cosc, sinc, ph, a2)
    te = t + h
    for i in range(n):
        ph[i] = phases0[i] + speeds[i] * te
    _eval_fourier(base, cosc, sinc, ph, a3)
    d = m.shape[0]
    _mat_product(a1, m, s1)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + 0.5 * h * s1[i, j]
    _mat_product(a2, tmp, s2)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + 0.5 * h * s2[i, j]
    _mat_product(a2, tmp, s3)
    for i in range(d):
        for j in range(d):
            tmp[i, j] = m[i, j] + h * s3[i, j]
    _mat_product(a3, tmp, s4)
    for i in range(d):
        for j in range(d):
            m[i, j] += (h / 6.0) * (s1[i, j] + 2.0 * s2[i, j] + 2.0 * s3[i, j] + s4[i, j])


@njit(cache=True)
def _clip_normalize_columns(m, ellcol, floor):
    d = m.shape[0]
    for j in range(d):
        s = 0.0
        for i in range(d):
            v = m[i, j]
            if v < 0.0:
                if v < floor:
                    return 1
                m[i, j] = 0.0
                v = 0.0
            s += v
        if s <= 0.0:
            return 2
        ellcol[j] += math.log(s)
        inv = 1.0 / s
        for i in range(d):
            m[i, j] *= inv
    return 0


@njit(cache=True)
def _record_mat(rec_t, rec_m, rec_scale, ridx, t, m, ellcol):
    d = m.shape[0]
    rec_t[ridx] = t
    for i in range(d):
        for j in range(d):
            rec_m[ridx, i, j] = m[i, j]
        rec_scale[ridx, i] = ellcol[i]


@njit(cache=True)
def drive_smooth_mat(base, cosc, sinc, phases0, speeds, m, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_m, rec_scale):
    d = m.shape[0]
    n = phases0.shape[0]
    a1 = np.empty((d, d))
    a2 = np.empty((d, d))
    a3 = np.empty((d, d))
    ph = np.empty(n)
    s1 = np.empty((d, d))
    s2 = np.empty((d, d))
    s3 = np.empty((d, d))
    s4 = np.empty((d, d))
    tmp = np.empty((d, d))
    ellcol = np.zeros(d)
    _record_mat(rec_t, rec_m, rec_scale, 0, 0.0, m, ellcol)
    ridx = 1
    for k in range(1, n_full + 1):
        t0 = (k - 1) * step
        _rk4_smooth_mat(base, cosc, sinc, phases0, speeds, t0, step, m,
                        a1, a2, a3, ph, s1, s2, s3, s4, tmp)
        st = _clip_normalize_columns(m, ellcol, floor)
        if st != 0:
            return st
        if k % thin == 0:
            _record_mat(rec_t, rec_m, rec_scale, ridx, k * step, m, ellcol)
            ridx += 1
    if tail != 0:
        t0 = n_full * step
        _rk4_smooth_mat(base, cosc, sinc, phases0, speeds, t0, horizon - t0, m,
                        a1, a2, a3, ph, s1, s2, s3, s4, tmp)
        st = _clip_normalize_columns(m, ellcol, floor)
        if st != 0:
            return st
        _record_mat(rec_t, rec_m, rec_scale, ridx, horizon, m, ellcol)
    elif n_full % thin != 0:
        _record_mat(rec_t, rec_m, rec_scale, ridx, n_full * step, m, ellcol)
    return 0


@njit(cache=True)
def drive_markov_mat(mats, states, jump_times, m, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_m, rec_scale):
    d = m.shape[0]
    s1 = np.empty((d, d))
    s2 = np.empty((d, d))
    s3 = np.empty((d, d))
    s4 = np.empty((d, d))
    tmp = np.empty((d, d))
    ellcol = np.zeros(d)
    _record_mat(rec_t, rec_m, rec_scale, 0, 0.0, m, ellcol)
    ridx = 1
    nj = jump_times.shape[0]
    j = 0
    pos = 0.0
    tiny = step * 1e-9
    total_nodes = n_full + (1 if tail != 0 else 0)
    for node in range(1, total_nodes + 1):
        target = node * step if node <= n_full else horizon
        if target > horizon:
            target = horizon
        while j < nj and jump_times[j] < target - tiny:
            h = jump_times[j] - pos
            if h > tiny:
                _rk4_const_mat(mats[states[j]], m, h, s1, s2, s3, s4, tmp)
                st = _clip_normalize_columns(m, ellcol, floor)
                if st != 0:
                    return st
            if jump_times[j] > pos:
                pos = jump_times[j]
            j += 1
        h = target - pos
        if h > tiny:
            _rk4_const_mat(mats[states[j]], m, h, s1, s2, s3, s4, tmp)
            st = _clip_normalize_columns(m, ellcol, floor)
            if st != 0:
                return st
        pos = target
        if node <= n_full:
            if node % thin == 0:
                _record_mat(rec_t, rec_m, rec_scale, ridx, target, m, ellcol)
                ridx += 1
        else:
            _record_mat(rec_t, rec_m, rec_scale, ridx, horizon, m, ellcol)
    if tail == 0 and n_full % thin != 0:
        _record_mat(rec_t, rec_m, rec_scale, ridx, n_full * step, m, ellcol)
    return 0


@njit(cache=True)
def drive_frozen_mat(base, cosc, sinc, svals, m, horizon, step,
                     n_full, tail, thin, floor, rec_t, rec_m, rec_scale):
    d = m.shape[0]
    a_mat = np.empty((d, d))
    ph = np.empty(1)
    s1 = np.empty((d, d))
    s2 = np.empty((d, d))
    s3 = np.empty((d, d))
    s4 = np.empty((d, d))
    tmp = np.empty((d, d))
    ellcol = np.zeros(d)
    _record_mat(rec_t, rec_m, rec_scale, 0, 0.0, m, ellcol)
    ridx = 1
    for k in range(1, n_full + 1):
        ph[0] = svals[k - 1]
        _eval_fourier(base, cosc, sinc, ph, a_mat)
        _rk4_const_mat(a_mat, m, step, s1, s2, s3, s4, tmp)
        st = _clip_normalize_columns(m, ellcol, floor)
        if st != 0:
            return st
        if k % thin == 0:
            _record_mat(rec_t, rec_m, rec_scale, ridx, k * step, m, ellcol)
            ridx += 1
    if tail != 0:
        ph[0] = svals[n_full]
        _eval_fourier(base, cosc, sinc, ph, a_mat)
        _rk4_const_mat(a_mat, m, horizon - n_full * step, s1, s2, s3, s4, tmp)
        st = _clip_normalize_columns(m, ellcol, floor)
        if st != 0:
            return st
        _record_mat(rec_t, rec_m, rec_scale, ridx, horizon, m, ellcol)
    elif n_full % thin != 0:
        _record_mat(rec_t, rec_m, rec_scale, ridx, n_full * step, m, ellcol)
    return 0

"""Jitted Dormand-Prince 8(5,3) kernels with 7th-order dense output.

Three drivers share one step routine: a recording integrator, a Poincare
crossing detector and a shadow-trajectory Lyapunov estimator.  All of them
take ``(q1, p1, q2, p2)`` points but step the Bloch-vector form
``(X, Y, Z, q2, p2)`` (see :mod:`rabistark.model`), which is regular at the
pole where the ``(q1, p1)`` chart is not.  Each driver returns a status code
instead of raising so :mod:`rabistark.classical` can attach context.

The tableau is taken from SciPy's DOP853 implementation (Hairer, Norsett &
Wanner, "Solving ODEs I", 2nd ed.).
"""

import math

import numba
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .model import _from_bloch, _rhs_bloch, _to_bloch

OK = 0
SINGULAR = 1
UNDERFLOW = 2
MAX_STEPS = 3

NB = 5  # Bloch-form state size
N_STAGES = _dop.N_STAGES  # 12
N_EXT = _dop.N_STAGES_EXTENDED  # 16
N_DENSE = _dop.INTERPOLATOR_POWER  # 7

TABLEAU = (
    np.ascontiguousarray(_dop.A, dtype=np.float64),
    np.ascontiguousarray(_dop.B, dtype=np.float64),
    np.ascontiguousarray(_dop.E3, dtype=np.float64),
    np.ascontiguousarray(_dop.E5, dtype=np.float64),
    np.ascontiguousarray(_dop.D, dtype=np.float64),
)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
ERR_EXP = -1.0 / 8.0


@numba.njit(cache=True, nogil=True)
def _f(par, y, out):
    for j in range(y.shape[0] // NB):
        _rhs_bloch(par, y[NB * j:NB * (j + 1)], out[NB * j:NB * (j + 1)])


@numba.njit(cache=True, nogil=True)
def _near_pole(y, margin):
    # r = 1 + Z, so r > 2 - margin  <=>  Z > 1 - margin
    for j in range(y.shape[0] // NB):
        if not y[NB * j + 2] <= 1.0 - margin:
            return True
    return False


@numba.njit(cache=True, nogil=True)
def _step(par, tab, y, h, K, ynew, tmp, tol):
    """One trial step from ``y`` with ``K[0] = f(y)``; returns the scaled error norm.

    On return ``K[12]`` holds ``f(ynew)``.
    """
    A, B, E3, E5, _ = tab
    n = y.shape[0]
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        _f(par, tmp, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * K[j, i]
        ynew[i] = y[i] + h * acc
    _f(par, ynew, K[N_STAGES])
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = tol + tol * max(abs(y[i]), abs(ynew[i]))
        a5 = 0.0
        a3 = 0.0
        for j in range(N_STAGES + 1):
            a5 += E5[j] * K[j, i]
            a3 += E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)


@numba.njit(cache=True, nogil=True)
def _dense_coeffs(par, tab, y, ynew, h, K, tmp, F):
    """Fill ``F`` with the interpolant on the step just taken (3 extra stages)."""
    A, _, _, _, D = tab
    n = y.shape[0]
    for s in range(N_STAGES + 1, N_EXT):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        _f(par, tmp, K[s])
    for i in range(n):
        dy = ynew[i] - y[i]
        F[0, i] = dy
        F[1, i] = h * K[0, i] - dy
        F[2, i] = 2.0 * dy - h * (K[N_STAGES, i] + K[0, i])
        for r in range(4):
            acc = 0.0
            for j in range(N_EXT):
                acc += D[r, j] * K[j, i]
            F[3 + r, i] = h * acc


@numba.njit(cache=True, nogil=True)
def dense_eval(F, y_old, x, out):
    """Evaluate the interpolant at fraction ``x`` of the step."""
    n = out.shape[0]
    for i in range(n):
        v = 0.0
        for k in range(N_DENSE):
            v += F[N_DENSE - 1 - k, i]
            v *= x if k % 2 == 0 else 1.0 - x
        out[i] = y_old[i] + v


@numba.njit(cache=True, nogil=True)
def _initial_step(y, k1, tol, t_span):
    n = y.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = tol + tol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (k1[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return min(h, t_span, 0.1)


@numba.njit(cache=True, nogil=True)
def _next_h(h, err):
    if err == 0.0:
        return h * FAC_MAX
    return h * min(FAC_MAX, max(FAC_MIN, SAFETY * err ** ERR_EXP))


@numba.njit(cache=True, nogil=True)
def _attempt(par, tab, y, t, h, t_stop, tol, K, ynew, tmp):
    """Try one step clipped to ``t_stop``.

    Returns ``(status, accepted, t_new, h_used, h_next)``.
    """
    last = t + h >= t_stop
    hu = t_stop - t if last else h
    err = _step(par, tab, y, hu, K, ynew, tmp, tol)
    if not err <= 1.0:
        hn = hu * 0.5 if err != err else _next_h(hu, err)
        if hn < 1e-14 * max(1.0, abs(t)):
            return UNDERFLOW, False, t, hu, hn
        return OK, False, t, hu, hn
    t_new = t_stop if last else t + hu
    # a step clipped to t_stop says nothing about the natural step size
    hn = h if last else _next_h(hu, err)
    return OK, True, t_new, hu, hn


@numba.njit(cache=True, nogil=True)
def _accept(par, y, ynew, K, project):
    """Take the step; optionally pull each spin back onto the unit sphere."""
    n = y.shape[0]
    for i in range(n):
        y[i] = ynew[i]
    if project:
        for j in range(n // NB):
            b = NB * j
            s = math.sqrt(y[b] ** 2 + y[b + 1] ** 2 + y[b + 2] ** 2)
            for i in range(3):
                y[b + i] /= s
        _f(par, y, K[0])
    else:
        for i in range(n):
            K[0, i] = K[N_STAGES, i]


@numba.njit(cache=True, nogil=True)
def integrate_kernel(par, tab, y0, t_end, tol, margin, project, max_steps):
    """Integrate and record every accepted step.

    Returns ``(status, t_reached, times, states, bloch, dense)``: chart points,
    their Bloch-form counterparts, and ``dense[k]``, the interpolant on
    ``[times[k], times[k + 1]]`` relative to ``bloch[k]``.
    """
    n = NB
    cap = 1024
    times = np.empty(cap)
    bstates = np.empty((cap, n))
    dense = np.empty((cap, N_DENSE, n))
    y = np.empty(n)
    _to_bloch(y0, y)
    ynew = np.empty(n)
    tmp = np.empty(n)
    K = np.empty((N_EXT, n))
    t = 0.0
    times[0] = 0.0
    bstates[0] = y
    m = 1
    status = OK
    if _near_pole(y, margin):
        status = SINGULAR
    else:
        _f(par, y, K[0])
        h = _initial_step(y, K[0], tol, t_end)
        steps = 0
        while t < t_end:
            if steps >= max_steps:
                status = MAX_STEPS
                break
            steps += 1
            st, ok, t_new, hu, h = _attempt(par, tab, y, t, h, t_end, tol, K, ynew, tmp)
            if st != OK:
                status = st
                break
            if not ok:
                continue
            if m >= cap:
                cap *= 2
                nt = np.empty(cap)
                nt[:m] = times[:m]
                times = nt
                ns = np.empty((cap, n))
                ns[:m] = bstates[:m]
                bstates = ns
                nd = np.empty((cap, N_DENSE, n))
                nd[: m - 1] = dense[: m - 1]
                dense = nd
            _dense_coeffs(par, tab, y, ynew, hu, K, tmp, dense[m - 1])
            _accept(par, y, ynew, K, project)
            t = t_new
            times[m] = t
            bstates[m] = y
            m += 1
            if _near_pole(y, margin):
                status = SINGULAR
                break
    states = np.empty((m, 4))
    for k in range(m):
        _from_bloch(bstates[k], states[k])
    return status, t, times[:m].copy(), states, bstates[:m].copy(), dense[: m - 1].copy()


@numba.njit(cache=True, nogil=True)
def _bisect_crossing(F, y_old, q2_lo, tol_q2, out):
    """Locate q2 = 0 (Bloch index 3) on one step's interpolant; returns x in [0, 1]."""
    a = 0.0
    b = 1.0
    s_a = q2_lo
    x = 0.5
    for _ in range(200):
        x = 0.5 * (a + b)
        dense_eval(F, y_old, x, out)
        v = out[3]
        if abs(v) < tol_q2:
            break
        if (v < 0.0) == (s_a < 0.0):
            a = x
            s_a = v
        else:
            b = x
    return x


@numba.njit(cache=True, nogil=True)
def section_kernel(par, tab, y0, t_end, tol, margin, project, max_cross, tol_q2, max_steps):
    """Integrate and record crossings of q2 = 0 with p2 > 0.

    Returns ``(status, t_reached, crossings)`` with rows ``(t, q1, p1, q2, p2, E)``
    where ``E`` is the energy at the crossing.  Stops after ``max_cross`` crossings.
    """
    n = NB
    cap = 256
    out = np.empty((cap, 6))
    count = 0
    y = np.empty(n)
    _to_bloch(y0, y)
    if _near_pole(y, margin):
        return SINGULAR, 0.0, out[:0]
    if y0[2] == 0.0 and y0[3] > 0.0 and max_cross > 0:
        out[0, 0] = 0.0
        for i in range(4):
            out[0, i + 1] = y0[i]
        out[0, 5] = _hcl_chart(par, y0)
        count = 1
    ynew = np.empty(n)
    tmp = np.empty(n)
    K = np.empty((N_EXT, n))
    F = np.empty((N_DENSE, n))
    yb = np.empty(n)
    yc = np.empty(4)
    t = 0.0
    _f(par, y, K[0])
    h = _initial_step(y, K[0], tol, t_end)
    steps = 0
    status = OK
    while t < t_end and count < max_cross:
        if steps >= max_steps:
            status = MAX_STEPS
            break
        steps += 1
        st, ok, t_new, hu, h = _attempt(par, tab, y, t, h, t_end, tol, K, ynew, tmp)
        if st != OK:
            status = st
            break
        if not ok:
            continue
        a = y[3]
        b = ynew[3]
        if (a < 0.0 and b >= 0.0) or (a > 0.0 and b <= 0.0):
            _dense_coeffs(par, tab, y, ynew, hu, K, tmp, F)
            x = _bisect_crossing(F, y, a, tol_q2, yb)
            if yb[4] > 0.0 and abs(yb[3]) < tol_q2:
                if count >= cap:
                    cap *= 2
                    no = np.empty((cap, 6))
                    no[:count] = out[:count]
                    out = no
                _from_bloch(yb, yc)
                out[count, 0] = t + x * hu
                for i in range(4):
                    out[count, i + 1] = yc[i]
                out[count, 5] = _hcl_chart(par, yc)
                count += 1
        _accept(par, y, ynew, K, project)
        t = t_new
        if _near_pole(y, margin):
            status = SINGULAR
            break
    return status, t, out[:count].copy()


@numba.njit(cache=True, nogil=True)
def _hcl_chart(par, y):
    w, w0, g, U = par[0], par[1], par[2], par[3]
    r = y[0] * y[0] + y[1] * y[1]
    rho = y[2] * y[2] + y[3] * y[3]
    return 0.5 * ((r - 1.0) * (rho * U + w) + rho * w0) + g * y[0] * y[2] * math.sqrt(max(4.0 - 2.0 * r, 0.0))


@numba.njit(cache=True, nogil=True)
def lyapunov_kernel(par, tab, y0, t_end, tol, margin, project, d0, renorm_dt, max_steps):
    """Benettin estimate from a shadow orbit renormalised every ``renorm_dt``.

    Separations are measured in the Bloch-form coordinates.  Returns
    ``(status, t_reached, lam)``.
    """
    n = 2 * NB
    y = np.empty(n)
    _to_bloch(y0, y[:NB])
    off = d0 / math.sqrt(NB)
    for i in range(NB):
        y[NB + i] = y[i] + off
    ynew = np.empty(n)
    tmp = np.empty(n)
    K = np.empty((N_EXT, n))
    if _near_pole(y[:NB], margin):
        return SINGULAR, 0.0, 0.0
    _f(par, y, K[0])
    t = 0.0
    h = _initial_step(y, K[0], tol, renorm_dt)
    log_sum = 0.0
    n_renorm = int(math.ceil(t_end / renorm_dt - 1e-12))
    steps = 0
    for k in range(n_renorm):
        t_next = min((k + 1) * renorm_dt, t_end)
        while t < t_next:
            if steps >= max_steps:
                return MAX_STEPS, t, 0.0
            steps += 1
            st, ok, t_new, hu, h = _attempt(par, tab, y, t, h, t_next, tol, K, ynew, tmp)
            if st != OK:
                return st, t, 0.0
            if ok:
                _accept(par, y, ynew, K, project)
                t = t_new
                if _near_pole(y[:NB], margin):
                    return SINGULAR, t, 0.0
        d = 0.0
        for i in range(NB):
            d += (y[NB + i] - y[i]) ** 2
        d = math.sqrt(d)
        if d == 0.0:
            continue
        log_sum += math.log(d / d0)
        for i in range(NB):
            y[NB + i] = y[i] + (y[NB + i] - y[i]) * (d0 / d)
        _f(par, y, K[0])
    return OK, t, log_sum / t_end

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contracts as ``_kernels_py``."""

from libc.math cimport atan, sin, cos, exp, log1p, sqrt, pow, fabs, INFINITY
from libc.stdlib cimport malloc, free

# Packed planner parameter layout (kept in sync with _kernels_py.py).
cdef enum:
    P_DT = 0
    P_AMIN = 1
    P_AMAX = 2
    P_X0 = 3
    P_V0 = 4
    P_APREV = 5
    P_WOSC = 6
    P_EAMP = 7
    P_EWID = 8
    P_EFLO = 9
    P_GAPMIN = 10
    P_TDEC = 11
    P_BDEC = 12
    P_IV0 = 13
    P_IT = 14
    P_IS0 = 15
    P_IA = 16
    P_IB = 17
    P_IDELTA = 18
    P_LEN = 19
    P_FMAX = 20
    P_SHARP = 21
    P_RHO = 22
    P_BUFG = 23
    P_BUFI = 24

cdef double S_FLOOR = 0.1
cdef double IDM_GAP_VIOLATION = 1e9

BACKEND = "compiled"


def fit_sse_grad(double B, double C, double D, const double[::1] kappa, const double[::1] force):
    cdef Py_ssize_t i, n = kappa.shape[0]
    cdef double sse = 0.0, d_c = 0.0, d_d = 0.0
    cdef double phi, s, r
    for i in range(n):
        phi = atan(atan(B * kappa[i]))
        s = sin(C * phi)
        r = force[i] - D * s
        sse += r * r
        d_c -= 2.0 * r * D * cos(C * phi) * phi
        d_d -= 2.0 * r * s
    return sse, d_c, d_d


cdef inline double _softplus(double z, double k, double* sig) nogil:
    cdef double kz = k * z, e
    if kz > 0.0:
        e = exp(-kz)
        sig[0] = 1.0 / (1.0 + e)
        return z + log1p(e) / k
    e = exp(kz)
    sig[0] = e / (1.0 + e)
    return log1p(e) / k


cdef inline double _dmax(double a, double b) nogil:
    return a if a > b else b


cdef double _cost_grad(const double* a, Py_ssize_t n, const double* p,
                       const double* xp, const double* vp, const double* xf, const double* vf,
                       double* grad, double* x, double* v, double* sig,
                       double* gx, double* gv) nogil:
    cdef Py_ssize_t t
    cdef double dt = p[P_DT], k = p[P_SHARP], rho = p[P_RHO]
    cdef double gap_min = p[P_GAPMIN], buf_g = p[P_BUFG], buf_i = p[P_BUFI]
    cdef double ia = p[P_IA]
    cdef double sqab = 2.0 * sqrt(ia * p[P_IB])
    cdef double length = p[P_LEN]
    cdef double w_osc = p[P_WOSC], amp = p[P_EAMP], floor_ = p[P_EFLO]
    cdef double inv_w2 = 1.0 / (p[P_EWID] * p[P_EWID])
    cdef double cost = 0.0, prev, at, ex, d, g, s, vft, dyn, sstar, idm, c, half, ratio
    cdef bint s_active, dyn_active

    x[0] = p[P_X0]
    v[0] = p[P_V0]
    for t in range(n):
        v[t + 1] = _softplus(v[t] + a[t] * dt, k, &sig[t])
        x[t + 1] = x[t] + 0.5 * (v[t] + v[t + 1]) * dt

    for t in range(n):
        grad[t] = 0.0
    prev = p[P_APREV]
    for t in range(n):
        at = a[t]
        ex = exp(-0.5 * at * at * inv_w2)
        cost += floor_ + amp * ex
        grad[t] += -amp * ex * at * inv_w2
        d = at - prev
        cost -= w_osc * d * d
        grad[t] -= 2.0 * w_osc * d
        if t > 0:
            grad[t - 1] += 2.0 * w_osc * d
        prev = at

    for t in range(n + 1):
        gx[t] = 0.0
        gv[t] = 0.0
    for t in range(1, n + 1):
        g = gap_min - (xp[t] - x[t]) + buf_g
        if g > 0.0:
            cost += rho * g * g
            gx[t] += 2.0 * rho * g
        g = gap_min - (x[t] - xf[t]) + buf_g
        if g > 0.0:
            cost += rho * g * g
            gx[t] -= 2.0 * rho * g
        s = x[t] - xf[t] - length
        s_active = s > S_FLOOR
        if not s_active:
            s = S_FLOOR
        vft = vf[t]
        dyn = vft * p[P_IT] + vft * (vft - v[t]) / sqab
        dyn_active = dyn > 0.0
        sstar = p[P_IS0] + (dyn if dyn_active else 0.0)
        ratio = sstar / s
        idm = ia * (1.0 - pow(vft / p[P_IV0], p[P_IDELTA]) - ratio * ratio)
        g = -p[P_FMAX] - idm + buf_i
        if g > 0.0:
            cost += rho * g * g
            c = 2.0 * rho * g
            if s_active:
                gx[t] += c * (-2.0 * ia * sstar * sstar / (s * s * s))
            if dyn_active:
                gv[t] += c * (2.0 * ia * sstar / (s * s)) * (-vft / sqab)

    # clamped trapezoidal braking stops at most d dt^2 / 8 beyond v^2 / 2d
    g = (x[n] + v[n] * v[n] / (2.0 * p[P_TDEC])
         + 0.125 * p[P_TDEC] * dt * dt + gap_min
         - xp[n] - vp[n] * vp[n] / (2.0 * p[P_BDEC]) + buf_g)
    if g > 0.0:
        cost += rho * g * g
        gx[n] += 2.0 * rho * g
        gv[n] += 2.0 * rho * g * v[n] / p[P_TDEC]

    for t in range(n, 0, -1):
        half = 0.5 * dt * gx[t]
        gv[t] += half
        gv[t - 1] += half
        gx[t - 1] += gx[t]
        grad[t - 1] += gv[t] * sig[t - 1] * dt
        gv[t - 1] += gv[t] * sig[t - 1]
    return cost


cdef double* _scratch(Py_ssize_t n) except NULL:
    # x, v, gx, gv need n + 1 slots; sig, grad, trial, trial_grad need n.
    cdef double* buf = <double*> malloc((8 * n + 4) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    return buf


def plan_cost_grad(double[::1] a, const double[::1] p, const double[::1] xp, const double[::1] vp,
                   const double[::1] xf, const double[::1] vf, double[::1] grad):
    cdef Py_ssize_t n = a.shape[0]
    cdef double* buf = _scratch(n)
    cdef double cost
    try:
        cost = _cost_grad(&a[0], n, &p[0], &xp[0], &vp[0], &xf[0], &vf[0], &grad[0],
                          buf, buf + (n + 1), buf + 2 * (n + 1), buf + 3 * n + 2, buf + 4 * n + 3)
    finally:
        free(buf)
    return cost


def plan_descend(double[::1] a, const double[::1] p, const double[::1] xp, const double[::1] vp,
                 const double[::1] xf, const double[::1] vf, int max_iter, double tol):
    cdef Py_ssize_t n = a.shape[0], t
    cdef double lo = p[P_AMIN], hi = p[P_AMAX]
    cdef double* buf = _scratch(n)
    cdef double* x = buf
    cdef double* v = buf + (n + 1)
    cdef double* gx = buf + 2 * (n + 1)
    cdef double* gv = buf + 3 * (n + 1)
    cdef double* sig = buf + 4 * (n + 1)
    cdef double* grad = sig + n
    cdef double* trial = grad + n
    cdef double* trial_grad = trial + n
    cdef double f, f_new = 0.0, step = 1.0, decrease, moved, z
    cdef int it
    cdef bint accepted
    try:
        f = _cost_grad(&a[0], n, &p[0], &xp[0], &vp[0], &xf[0], &vf[0], grad, x, v, sig, gx, gv)
        for it in range(max_iter):
            accepted = False
            while step > 1e-12:
                decrease = 0.0
                moved = 0.0
                for t in range(n):
                    z = a[t] - step * grad[t]
                    if z < lo:
                        z = lo
                    elif z > hi:
                        z = hi
                    trial[t] = z
                    decrease += grad[t] * (z - a[t])
                    moved = _dmax(moved, fabs(z - a[t]))
                if moved == 0.0:
                    return f
                f_new = _cost_grad(trial, n, &p[0], &xp[0], &vp[0], &xf[0], &vf[0],
                                   trial_grad, x, v, sig, gx, gv)
                if f_new <= f + 1e-4 * decrease:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                return f
            for t in range(n):
                a[t] = trial[t]
                grad[t] = trial_grad[t]
            if moved < tol or f - f_new <= 1e-13 * (1.0 + fabs(f)):
                return f_new
            f = f_new
            step = step * 2.0
            if step > 1e3:
                step = 1e3
        return f
    finally:
        free(buf)


def plan_check(const double[::1] a, const double[::1] p, const double[::1] xp, const double[::1] vp,
               const double[::1] xf, const double[::1] vf, double[::1] x_out, double[::1] v_out):
    cdef Py_ssize_t n = a.shape[0], t
    cdef double dt = p[P_DT], gap_min = p[P_GAPMIN], ia = p[P_IA]
    cdef double sqab = 2.0 * sqrt(ia * p[P_IB])
    cdef double length = p[P_LEN]
    cdef double x = p[P_X0], v = p[P_V0], v_next, s, vft, dyn, sstar, idm, ratio
    cdef double worst = -INFINITY
    x_out[0] = x
    v_out[0] = v
    for t in range(1, n + 1):
        v_next = v + a[t - 1] * dt
        if v_next < 0.0:
            v_next = 0.0
        x = x + 0.5 * (v + v_next) * dt
        v = v_next
        x_out[t] = x
        v_out[t] = v
        worst = _dmax(worst, _dmax(gap_min - (xp[t] - x), gap_min - (x - xf[t])))
        s = x - xf[t] - length
        if s <= 0.0:
            worst = _dmax(worst, IDM_GAP_VIOLATION)
            continue
        vft = vf[t]
        dyn = vft * p[P_IT] + vft * (vft - v) / sqab
        sstar = p[P_IS0] + (dyn if dyn > 0.0 else 0.0)
        ratio = sstar / s
        idm = ia * (1.0 - pow(vft / p[P_IV0], p[P_IDELTA]) - ratio * ratio)
        worst = _dmax(worst, -p[P_FMAX] - idm)
    worst = _dmax(worst, x + v * v / (2.0 * p[P_TDEC])
                  + 0.125 * p[P_TDEC] * dt * dt + gap_min - xp[n] - vp[n] * vp[n] / (2.0 * p[P_BDEC]))
    return worst

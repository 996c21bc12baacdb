"""Pure-Python kernels. Mirrors ``_kernels.pyx`` operation for operation.

Planning problems are passed as a packed parameter vector; the layout is
defined by the ``P_*`` indices in :mod:`trfc.kernels`.
"""

from __future__ import annotations

import math

# Packed planner parameter layout (kept in sync with _kernels.pyx).
P_DT, P_AMIN, P_AMAX, P_X0, P_V0, P_APREV, P_WOSC = 0, 1, 2, 3, 4, 5, 6
P_EAMP, P_EWID, P_EFLO, P_GAPMIN, P_TDEC, P_BDEC = 7, 8, 9, 10, 11, 12
P_IV0, P_IT, P_IS0, P_IA, P_IB, P_IDELTA = 13, 14, 15, 16, 17, 18
P_LEN, P_FMAX, P_SHARP, P_RHO, P_BUFG, P_BUFI = 19, 20, 21, 22, 23, 24
N_PARAMS = 25

S_FLOOR = 0.1
IDM_GAP_VIOLATION = 1e9

BACKEND = "python"


def fit_sse_grad(B, C, D, kappa, force):
    """Sum of squared residuals of the simplified formula and its (C, D) gradient."""
    sse = 0.0
    d_c = 0.0
    d_d = 0.0
    for k, y in zip(kappa, force):
        phi = math.atan(math.atan(B * k))
        s = math.sin(C * phi)
        r = y - D * s
        sse += r * r
        d_c -= 2.0 * r * D * math.cos(C * phi) * phi
        d_d -= 2.0 * r * s
    return sse, d_c, d_d


def _softplus(z, k):
    kz = k * z
    if kz > 0.0:
        e = math.exp(-kz)
        return z + math.log1p(e) / k, 1.0 / (1.0 + e)
    e = math.exp(kz)
    return math.log1p(e) / k, e / (1.0 + e)


def _objective_terms(a, p, grad):
    w_osc = p[P_WOSC]
    amp = p[P_EAMP]
    inv_w2 = 1.0 / (p[P_EWID] * p[P_EWID])
    floor = p[P_EFLO]
    cost = 0.0
    prev = p[P_APREV]
    n = len(a)
    for t in range(n):
        at = a[t]
        ex = math.exp(-0.5 * at * at * inv_w2)
        cost += floor + amp * ex
        grad[t] += -amp * ex * at * inv_w2
        d = at - prev
        cost -= w_osc * d * d
        grad[t] -= 2.0 * w_osc * d
        if t > 0:
            grad[t - 1] += 2.0 * w_osc * d
        prev = at
    return cost


def plan_cost_grad(a, p, xp, vp, xf, vf, grad):
    """Smoothed planner cost (objective + quadratic penalty) and its gradient.

    ``grad`` is overwritten. Velocity clamps use a softplus of sharpness
    ``p[P_SHARP]``; constraints are tightened by the buffers.
    """
    n = len(a)
    dt = p[P_DT]
    k = p[P_SHARP]
    rho = p[P_RHO]
    gap_min = p[P_GAPMIN]
    buf_g = p[P_BUFG]
    buf_i = p[P_BUFI]
    ia = p[P_IA]
    sqab = 2.0 * math.sqrt(ia * p[P_IB])
    length = p[P_LEN]

    x = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    sig = [0.0] * n
    x[0] = p[P_X0]
    v[0] = p[P_V0]
    for t in range(n):
        v[t + 1], sig[t] = _softplus(v[t] + a[t] * dt, k)
        x[t + 1] = x[t] + 0.5 * (v[t] + v[t + 1]) * dt

    for t in range(n):
        grad[t] = 0.0
    cost = _objective_terms(a, p, grad)

    gx = [0.0] * (n + 1)
    gv = [0.0] * (n + 1)
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
        idm = ia * (1.0 - (vft / p[P_IV0]) ** p[P_IDELTA] - (sstar / s) ** 2)
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


def plan_descend(a, p, xp, vp, xf, vf, max_iter, tol):
    """Projected gradient descent with Armijo backtracking, in place on ``a``."""
    n = len(a)
    lo = p[P_AMIN]
    hi = p[P_AMAX]
    grad = [0.0] * n
    trial_grad = [0.0] * n
    trial = [0.0] * n
    f = plan_cost_grad(a, p, xp, vp, xf, vf, grad)
    step = 1.0
    for _ in range(max_iter):
        accepted = False
        while step > 1e-12:
            decrease = 0.0
            moved = 0.0
            for t in range(n):
                z = a[t] - step * grad[t]
                z = lo if z < lo else (hi if z > hi else z)
                trial[t] = z
                decrease += grad[t] * (z - a[t])
                moved = max(moved, abs(z - a[t]))
            if moved == 0.0:
                return f
            f_new = plan_cost_grad(trial, p, xp, vp, xf, vf, trial_grad)
            if f_new <= f + 1e-4 * decrease:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return f
        for t in range(n):
            a[t] = trial[t]
            grad[t] = trial_grad[t]
        if moved < tol or f - f_new <= 1e-13 * (1.0 + abs(f)):
            return f_new
        f = f_new
        step = min(step * 2.0, 1e3)
    return f


def plan_check(a, p, xp, vp, xf, vf, x_out, v_out):
    """Exact rollout with hard clamps. Returns the largest constraint value.

    A plan is feasible when the returned value is negative. Positions and
    speeds of the ego are written into ``x_out`` and ``v_out``.
    """
    n = len(a)
    dt = p[P_DT]
    gap_min = p[P_GAPMIN]
    ia = p[P_IA]
    sqab = 2.0 * math.sqrt(ia * p[P_IB])
    length = p[P_LEN]
    x = p[P_X0]
    v = p[P_V0]
    x_out[0] = x
    v_out[0] = v
    worst = -math.inf
    for t in range(1, n + 1):
        v_next = v + a[t - 1] * dt
        if v_next < 0.0:
            v_next = 0.0
        x = x + 0.5 * (v + v_next) * dt
        v = v_next
        x_out[t] = x
        v_out[t] = v
        worst = max(worst, gap_min - (xp[t] - x), gap_min - (x - xf[t]))
        s = x - xf[t] - length
        if s <= 0.0:
            worst = max(worst, IDM_GAP_VIOLATION)
            continue
        vft = vf[t]
        dyn = vft * p[P_IT] + vft * (vft - v) / sqab
        sstar = p[P_IS0] + (dyn if dyn > 0.0 else 0.0)
        idm = ia * (1.0 - (vft / p[P_IV0]) ** p[P_IDELTA] - (sstar / s) ** 2)
        worst = max(worst, -p[P_FMAX] - idm)
    worst = max(worst, x + v * v / (2.0 * p[P_TDEC])
                + 0.125 * p[P_TDEC] * dt * dt + gap_min - xp[n] - vp[n] * vp[n] / (2.0 * p[P_BDEC]))
    return worst

"""Compiled inner loops for the optimizer objective and the warp build.

Only IEEE basic operations plus sqrt/exp are used on the warp path, so the
result does not depend on the vector width numpy would pick.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# models whose Gaussian weight is below exp(-LOG_CUTOFF) of the strongest valid model are skipped;
# their share of the blend is < 1e-12
LOG_CUTOFF = 27.7


@njit(cache=True)
def energy_batch(sin_p, cos_p, tan_t, n_lines, n_points, cos_t, h, literal,
                 omega_d, omega_c, abs_phi_max, cos_min, denom_eps, guard, d_arr, w_arr, out):
    """Objective for every (d, w) candidate; ``inf`` where any item leaves the frustum."""
    nl = 3 * n_lines
    uu = np.empty(4)
    vv = np.empty(4)
    for j in range(d_arr.shape[0]):
        d = d_arr[j]
        w = w_arr[j]
        lim = math.acos(-d) if d <= 1.0 else math.acos(-1.0 / d)
        if w > 0.0 and lim > 0.5 * math.pi:
            lim = 0.5 * math.pi
        lim -= guard
        if not (abs_phi_max < lim and d + cos_min > denom_eps and (w == 0.0 or cos_min > denom_eps)):
            out[j] = math.inf
            continue
        a = (d + 1.0) * (1.0 - w)
        lines = 0.0
        for i in range(n_lines):
            us = vs = um = vm = ue = ve = 0.0
            for k in range(3):
                q = 3 * i + k
                den = d + cos_p[q]
                u = (d + 1.0) * sin_p[q] / den
                v = tan_t[q] * (a / den + w / cos_p[q])
                if k == 0:
                    us, vs = u, v
                elif k == 1:
                    um, vm = u, v
                else:
                    ue, ve = u, v
            chord = math.sqrt((us - ue) * (us - ue) + (vs - ve) * (vs - ve))
            if chord > 1e-12:
                dist = (us * (ve - vm) + ue * (vm - vs) + um * (vs - ve)) / chord
                lines += dist * dist
        points = 0.0
        for i in range(n_points):
            for k in range(4):
                q = nl + 4 * i + k
                den = d + cos_p[q]
                uu[k] = (d + 1.0) * sin_p[q] / den
                vv[k] = tan_t[q] * (a / den + w / cos_p[q])
            du_dt = (uu[0] - uu[1]) / (2.0 * h)
            dv_dt = (vv[0] - vv[1]) / (2.0 * h)
            du_dp = (uu[2] - uu[3]) / (2.0 * h)
            dv_dp = (vv[2] - vv[3]) / (2.0 * h)
            first = cos_t[i] * du_dt + (du_dp if literal else dv_dp)
            second = cos_t[i] * dv_dt - du_dp
            points += first * first + second * second
        total = omega_d * lines + omega_c * points
        out[j] = total if math.isfinite(total) else math.inf


@njit(cache=True, inline="always")
def _inverse(u, v, d, w, cos_lim, denom_eps, vec):
    """Pannini inverse of one plane point into ``vec``; returns validity."""
    k = (u / (d + 1.0)) * (u / (d + 1.0))
    disc = 1.0 + k * (1.0 - d * d)
    if not disc >= 0.0:
        return False
    c = (1.0 - k * d * d) / (k * d + math.sqrt(disc))
    s = u * (d + c) / (d + 1.0)
    n = math.sqrt(s * s + c * c)
    c = c / n
    s = s / n
    den = d + c
    kk = (d + 1.0) * (1.0 - w) / den
    if w != 0.0:
        kk = kk + w / c
    t = v / kk
    if not (den > denom_eps and kk > 0.0 and c > cos_lim and math.isfinite(t)):
        return False
    norm = math.sqrt(1.0 + t * t)
    vec[0] = s / norm
    vec[1] = t / norm
    vec[2] = c / norm
    return True


@njit(cache=True, nogil=True)
def backward_points(u, v, d, w, cos_lim, denom_eps, out, valid):
    vec = np.empty(3)
    for i in range(u.shape[0]):
        ok = _inverse(u[i], v[i], d, w, cos_lim, denom_eps, vec)
        valid[i] = ok
        if ok:
            out[i, 0] = vec[0]
            out[i, 1] = vec[1]
            out[i, 2] = vec[2]
        else:
            out[i, 0] = out[i, 1] = out[i, 2] = np.nan


@njit(cache=True, nogil=True)
def blend_points(x, y, model_params, model_geom, rots, two_sigma, denom_eps, out, valid):
    """Gaussian-weighted unit-vector blend of several Pannini backward maps.

    ``model_params`` rows are (d, w, cos_lim, log_c); ``model_geom`` rows are
    (center_x, center_y, pixels_per_unit, weight_x, weight_y). Model 0 is the
    global one; its rotation is ignored.
    """
    m = model_params.shape[0]
    logw = np.empty(m)
    state = np.zeros(m, dtype=np.int8)  # 0 unevaluated, 1 valid, 2 invalid
    vecs = np.empty((m, 3))
    local = np.empty(3)
    for i in range(x.shape[0]):
        xi = x[i]
        yi = y[i]
        for k in range(m):
            dx = xi - model_geom[k, 3]
            dy = yi - model_geom[k, 4]
            logw[k] = model_params[k, 3] - (dx * dx + dy * dy) / two_sigma
            state[k] = 0
        # lazily evaluate models close enough in weight to the strongest not-yet-rejected one
        while True:
            best = -math.inf
            for k in range(m):
                if state[k] != 2 and logw[k] > best:
                    best = logw[k]
            if best == -math.inf:
                break
            changed = False
            for k in range(m):
                if state[k] == 0 and logw[k] >= best - LOG_CUTOFF:
                    ppu = model_geom[k, 2]
                    u = (xi - model_geom[k, 0]) / ppu
                    v = (model_geom[k, 1] - yi) / ppu
                    if _inverse(u, v, model_params[k, 0], model_params[k, 1], model_params[k, 2], denom_eps, local):
                        if k == 0:
                            vecs[k, 0] = local[0]
                            vecs[k, 1] = local[1]
                            vecs[k, 2] = local[2]
                        else:
                            r = rots[k]
                            vecs[k, 0] = r[0, 0] * local[0] + r[0, 1] * local[1] + r[0, 2] * local[2]
                            vecs[k, 1] = r[1, 0] * local[0] + r[1, 1] * local[1] + r[1, 2] * local[2]
                            vecs[k, 2] = r[2, 0] * local[0] + r[2, 1] * local[1] + r[2, 2] * local[2]
                        state[k] = 1
                    else:
                        state[k] = 2
                        changed = True
            if not changed:
                break
        used = 0
        last = -1
        for k in range(m):
            if state[k] == 1 and logw[k] >= best - LOG_CUTOFF:
                used += 1
                last = k
        if used == 0:
            valid[i] = False
            out[i, 0] = out[i, 1] = out[i, 2] = np.nan
            continue
        if used == 1:
            valid[i] = True
            out[i, 0] = vecs[last, 0]
            out[i, 1] = vecs[last, 1]
            out[i, 2] = vecs[last, 2]
            continue
        ax = ay = az = 0.0
        for k in range(m):
            if state[k] == 1 and logw[k] >= best - LOG_CUTOFF:
                wk = math.exp(logw[k] - best)
                ax += wk * vecs[k, 0]
                ay += wk * vecs[k, 1]
                az += wk * vecs[k, 2]
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n > 1e-12:
            valid[i] = True
            out[i, 0] = ax / n
            out[i, 1] = ay / n
            out[i, 2] = az / n
        else:
            valid[i] = False
            out[i, 0] = out[i, 1] = out[i, 2] = np.nan


@njit(cache=True)
def _penalized(energy_args, penalty, d, w, dd, ww, out):
    dd[0] = d
    ww[0] = w
    (sin_p, cos_p, tan_t, n_lines, n_points, cos_t, h, literal,
     omega_d, omega_c, abs_phi_max, cos_min, denom_eps, guard) = energy_args
    energy_batch(sin_p, cos_p, tan_t, n_lines, n_points, cos_t, h, literal,
                 omega_d, omega_c, abs_phi_max, cos_min, denom_eps, guard, dd, ww, out)
    pd, pw, omega_pd, omega_ps = penalty
    return out[0] + omega_pd * (d - pd) * (d - pd) + omega_ps * (w - pw) * (w - pw)


@njit(cache=True)
def descend(energy_args, penalty, x0, lo, hi, step_size, max_alpha, max_iters, grad_tol, fd,
            max_halvings, history, iterates):
    """Projected steepest descent with backtracking halving and step doubling.

    ``penalty`` is (d_prev, w_prev, omega_pd, omega_ps); zero weights disable it.
    Fills ``history``/``iterates`` and returns (entries written, iterations).
    """
    dd = np.empty(1)
    ww = np.empty(1)
    out = np.empty(1)
    x = np.empty(2)
    x[0] = min(max(x0[0], lo[0]), hi[0])
    x[1] = min(max(x0[1], lo[1]), hi[1])
    fx = _penalized(energy_args, penalty, x[0], x[1], dd, ww, out)
    history[0] = fx
    iterates[0, 0] = x[0]
    iterates[0, 1] = x[1]
    n = 1
    iterations = 0
    if not math.isfinite(fx):
        return n, iterations
    alpha = step_size
    grad = np.empty(2)
    direction = np.empty(2)
    cand = np.empty(2)
    for it in range(max_iters):
        for i in range(2):
            xa = min(x[i] + fd, hi[i])
            xb = max(x[i] - fd, lo[i])
            if i == 0:
                fa = _penalized(energy_args, penalty, xa, x[1], dd, ww, out)
                fb = _penalized(energy_args, penalty, xb, x[1], dd, ww, out)
            else:
                fa = _penalized(energy_args, penalty, x[0], xa, dd, ww, out)
                fb = _penalized(energy_args, penalty, x[0], xb, dd, ww, out)
            # one-sided differences at bounds or frustum edges
            if not math.isfinite(fa):
                fa = fx
                xa = x[i]
            if not math.isfinite(fb):
                fb = fx
                xb = x[i]
            grad[i] = (fa - fb) / (xa - xb) if xa != xb else 0.0
        for i in range(2):
            direction[i] = -grad[i]
            if (x[i] <= lo[i] and direction[i] < 0.0) or (x[i] >= hi[i] and direction[i] > 0.0):
                direction[i] = 0.0
        gnorm = math.sqrt(direction[0] * direction[0] + direction[1] * direction[1])
        if gnorm <= grad_tol:
            break
        direction[0] /= gnorm
        direction[1] /= gnorm

        used = -1
        f_new = fx
        step = alpha
        for k in range(max_halvings):
            cand[0] = min(max(x[0] + step * direction[0], lo[0]), hi[0])
            cand[1] = min(max(x[1] + step * direction[1], lo[1]), hi[1])
            fc = _penalized(energy_args, penalty, cand[0], cand[1], dd, ww, out)
            if fc < fx:
                used = k
                f_new = fc
                break
            step *= 0.5
        if used < 0:
            break
        moved = max(abs(cand[0] - x[0]), abs(cand[1] - x[1]))
        x[0] = cand[0]
        x[1] = cand[1]
        fx = f_new
        alpha = min(2.0 * alpha, max_alpha) if used == 0 else alpha * 0.5 ** used
        history[n] = fx
        iterates[n, 0] = x[0]
        iterates[n, 1] = x[1]
        n += 1
        iterations = it + 1
        if moved < 1e-13:
            break
    return n, iterations

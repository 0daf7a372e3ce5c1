"""Compiled time-stepping kernels.

These loops mirror ``rhs_reduced_batch`` / ``rhs_full_batch`` in
``characteristics`` one seed at a time; the numpy versions stay as the
readable reference and the tests compare the two.

Field families are passed as ``(code, params)``:

    0 constant     (b0,)
    1 sinusoidal   (b0, a, k1, k2)
    2 gaussian     (b0, a, c1, c2, sigma)
    3 exponential  (b0, lam)
"""

import math

import numpy as np
from numba import njit

R_NCOMP = 10
F_NCOMP = 16


@njit(cache=True)
def b_eval(code, p, x1, x2):
    if code == 0:
        return p[0], 0.0, 0.0
    if code == 1:
        arg = p[2] * x1 + p[3] * x2
        ac = p[1] * math.cos(arg)
        return p[0] + p[1] * math.sin(arg), ac * p[2], ac * p[3]
    if code == 2:
        d1 = x1 - p[2]
        d2 = x2 - p[3]
        s2 = p[4] * p[4]
        g = math.exp(-(d1 * d1 + d2 * d2) / s2)
        f = -2.0 * p[1] * g / s2
        return p[0] + p[1] * g, f * d1, f * d2
    e = p[0] * math.exp(p[1] * x1)
    return e, p[1] * e, 0.0


@njit(cache=True)
def rhs_reduced(s, u, up, du, dup, code, p, inv_eps, k):
    arg = s[2] * inv_eps
    c = math.cos(arg)
    sn = math.sin(arg)
    b, g1, g2 = b_eval(code, p, s[0], s[1])
    k[0] = u[0] * c - up[0] * sn
    k[1] = u[1] * c - up[1] * sn
    k[2] = b
    w1 = (u[0] * sn + up[0] * c) * inv_eps
    w2 = (u[1] * sn + up[1] * c) * inv_eps
    e0 = du[0] * c - dup[0] * sn - w1 * s[7]
    e1 = du[1] * c - dup[1] * sn - w1 * s[8]
    e2 = du[2] * c - dup[2] * sn - w2 * s[7]
    e3 = du[3] * c - dup[3] * sn - w2 * s[8]
    k[3] = e0
    k[4] = e1
    k[5] = e2
    k[6] = e3
    k[7] = s[3] * g1 + s[5] * g2
    k[8] = s[4] * g1 + s[6] * g2
    det = s[3] * s[6] - s[4] * s[5]
    k[9] = -(s[6] * e0 - s[4] * e2 - s[5] * e1 + s[3] * e3) / det


@njit(cache=True)
def rhs_full(s, u, up, du, dup, code, p, inv_eps, k):
    b, g1, g2 = b_eval(code, p, s[0], s[1])
    U1 = s[2]
    U2 = s[3]
    kk = b * inv_eps
    k[0] = U1
    k[1] = U2
    k[2] = -kk * U2
    k[3] = kk * U1
    k[4] = b
    for j in range(4):
        k[5 + j] = s[9 + j]
    q1 = s[5] * g1 + s[7] * g2
    q2 = s[6] * g1 + s[8] * g2
    k[9] = -inv_eps * (U2 * q1 + b * s[11])
    k[10] = -inv_eps * (U2 * q2 + b * s[12])
    k[11] = -inv_eps * (-U1 * q1 - b * s[9])
    k[12] = -inv_eps * (-U1 * q2 - b * s[10])
    k[13] = q1
    k[14] = q2
    det = s[5] * s[8] - s[6] * s[7]
    k[15] = -(s[8] * s[9] - s[6] * s[11] - s[7] * s[10] + s[5] * s[12]) / det


@njit(cache=True)
def rk_step(full, s, h, A, W, u, up, du, dup, code, p, inv_eps, K, tmp):
    ns = W.shape[0]
    nc = s.shape[0]
    for st in range(ns):
        for c in range(nc):
            tmp[c] = s[c]
        for j in range(st):
            a = A[st, j]
            if a != 0.0:
                for c in range(nc):
                    tmp[c] += h * a * K[j, c]
        if full:
            rhs_full(tmp, u, up, du, dup, code, p, inv_eps, K[st])
        else:
            rhs_reduced(tmp, u, up, du, dup, code, p, inv_eps, K[st])
    for st in range(ns):
        wh = h * W[st]
        for c in range(nc):
            s[c] += wh * K[st, c]


@njit(cache=True)
def det_of(full, s):
    o = 5 if full else 3
    return s[o] * s[o + 3] - s[o + 1] * s[o + 2]


@njit(cache=True)
def march(full, S0, U, UP, DU, DUP, code, p, inv_eps, times, h_target, A, W,
          rect, has_domain, out, exit_times):
    nc, n = S0.shape
    m = times.shape[0]
    ns = W.shape[0]
    K = np.empty((ns, nc))
    tmp = np.empty(nc)
    s = np.empty(nc)
    nsteps = 0
    for i in range(n):
        for c in range(nc):
            s[c] = S0[c, i]
            out[0, c, i] = s[c]
        exit_times[i] = np.nan
        left = False
        for kk in range(1, m):
            dt = times[kk] - times[kk - 1]
            nsub = max(1, int(math.ceil(dt / h_target - 1e-9)))
            h = dt / nsub
            if not left:
                for j in range(nsub):
                    rk_step(full, s, h, A, W, U[:, i], UP[:, i], DU[:, i], DUP[:, i],
                            code, p, inv_eps, K, tmp)
                    if has_domain:
                        if (s[0] < rect[0] or s[0] > rect[1]
                                or s[1] < rect[2] or s[1] > rect[3]):
                            exit_times[i] = times[kk - 1] + (j + 1) * h
                            left = True
                            break
            if i == 0:
                nsteps += nsub
            for c in range(nc):
                out[kk, c, i] = s[c] if not left else np.nan
    return nsteps


@njit(cache=True)
def caustic_scan(full, S0, U, UP, DU, DUP, code, p, inv_eps, t_max, h_target, A, W,
                 refine_tol, t_cross, jmin):
    """Per seed: first time det(DX) <= 0 (inf if none before the cap) and the
    minimum det(DX) seen. Seeds after the first crossing are only marched up
    to the best crossing found so far."""
    nc, n = S0.shape
    ns = W.shape[0]
    K = np.empty((ns, nc))
    tmp = np.empty(nc)
    s = np.empty(nc)
    prev = np.empty(nc)
    trial = np.empty(nc)
    nsub = max(1, int(math.ceil(t_max / h_target - 1e-9)))
    h = t_max / nsub
    best = np.inf
    for i in range(n):
        for c in range(nc):
            s[c] = S0[c, i]
        jm = 1.0
        t_cross[i] = np.inf
        for k in range(nsub):
            if k * h > best:
                break
            for c in range(nc):
                prev[c] = s[c]
            rk_step(full, s, h, A, W, U[:, i], UP[:, i], DU[:, i], DUP[:, i],
                    code, p, inv_eps, K, tmp)
            J = det_of(full, s)
            if J < jm:
                jm = J
            if J <= 0.0:
                lo = 0.0
                hi = h
                while hi - lo > refine_tol:
                    mid = 0.5 * (lo + hi)
                    for c in range(nc):
                        trial[c] = prev[c]
                    rk_step(full, trial, mid, A, W, U[:, i], UP[:, i], DU[:, i], DUP[:, i],
                            code, p, inv_eps, K, tmp)
                    if det_of(full, trial) <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                t_cross[i] = k * h + hi
                if t_cross[i] < best:
                    best = t_cross[i]
                break
        jmin[i] = jm
    return nsub

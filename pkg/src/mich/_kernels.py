"""Compiled inner loops for the univariate Gaussian engine.

Component parameters live in ``(N, T)`` arrays and every function below
mutates them in place.  ``kinds`` encodes the class of each row with the
constants ``MEAN``, ``VAR`` and ``MEANVAR``.  The shape parameter
``u_bar = u0 + (T - i) / 2`` is the same for every variance-carrying
component, so its log-gamma and digamma values are precomputed by the
caller and passed in as ``glu`` and ``psiu``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MEAN, VAR, MEANVAR = 0, 1, 2
LAMBDA_FLOOR = 1e-300


@njit(cache=True)
def normalize_row(logw, pi, lpb):
    """Write the normalized probabilities and their logs; return False if degenerate."""
    T = logw.shape[0]
    m = -np.inf
    for i in range(T):
        if logw[i] > m:
            m = logw[i]
    if not np.isfinite(m):
        return False
    s = 0.0
    for i in range(T):
        if logw[i] > -np.inf:
            s += np.exp(logw[i] - m)
    lz = m + np.log(s)
    tot = 0.0
    for i in range(T):
        if logw[i] > -np.inf:
            lpb[i] = logw[i] - lz
            pi[i] = np.exp(lpb[i])
        else:
            lpb[i] = -np.inf
            pi[i] = 0.0
        tot += pi[i]
    for i in range(T):
        pi[i] /= tot
    return np.isfinite(tot) and tot > 0


@njit(cache=True)
def contributions(k, kinds, b, ob, ubar, v, pi, shift, logprec, dvar):
    """Refresh row ``k`` of the mean shift, log precision and variance arrays."""
    T = pi.shape[1]
    kind = kinds[k]
    if kind == MEAN:
        c1 = 0.0
        c2 = 0.0
        for i in range(T):
            c1 += b[k, i] * pi[k, i]
            c2 += (b[k, i] * b[k, i] + 1.0 / ob[k, i]) * pi[k, i]
            shift[k, i] = c1
            logprec[k, i] = 0.0
            dvar[k, i] = max(c2 - c1 * c1, 0.0)
        return 0
    tail = np.empty(T)
    acc = 0.0
    for i in range(T - 1, -1, -1):
        tail[i] = acc
        acc += pi[k, i]
    clamps = 0
    c_lam = 0.0
    c_lm = 0.0
    c_lm2 = 0.0
    for i in range(T):
        ratio = ubar[i] / v[k, i]
        c_lam += pi[k, i] * ratio
        e = c_lam + tail[i]
        if e < LAMBDA_FLOOR:
            e = LAMBDA_FLOOR
            clamps += 1
        logprec[k, i] = np.log(e)
        if kind == VAR:
            shift[k, i] = 0.0
            dvar[k, i] = 0.0
        else:
            c_lm += b[k, i] * ratio * pi[k, i]
            c_lm2 += pi[k, i] * (b[k, i] * b[k, i] * ratio + 1.0 / ob[k, i])
            m = c_lm / e
            shift[k, i] = m
            dvar[k, i] = max(c_lm2 / e - m * m, 0.0)
    return clamps


@njit(cache=True)
def update(k, y, mu0, loglam0, kinds, lp, b, ob, ubar, v, pi, lpb, shift, logprec, dvar,
           omega0, v0, glu):
    """Refit component ``k`` against the partial residuals of all other components.

    Returns the number of clamped rates, or -1 if the location weights
    came out degenerate.
    """
    N, T = pi.shape
    r = np.empty(T)
    lam = np.empty(T)
    dm = np.empty(T)
    for i in range(T):
        rs = y[i] - mu0
        ls = loglam0
        ds = 0.0
        for j in range(N):
            if j != k:
                rs -= shift[j, i]
                ls += logprec[j, i]
                ds += dvar[j, i]
        r[i] = rs
        lam[i] = np.exp(ls)
        dm[i] = ds
    kind = kinds[k]
    logw = np.empty(T)
    clamps = 0
    if kind == MEAN:
        s_w = 0.0
        s_wy = 0.0
        for i in range(T - 1, -1, -1):
            s_w += lam[i]
            s_wy += lam[i] * r[i]
            o = omega0 + s_w
            ob[k, i] = o
            b[k, i] = s_wy / o
            logw[i] = lp[k, i] - 0.5 * np.log(o) + 0.5 * s_wy * s_wy / o
    else:
        s_ld = 0.0
        s_w = 0.0
        s_wy = 0.0
        s_wy2 = 0.0
        for i in range(T - 1, -1, -1):
            wy = lam[i] * r[i]
            s_ld += lam[i] * dm[i]
            s_wy2 += wy * r[i]
            vt = v0 + 0.5 * s_ld
            if kind == VAR:
                v[k, i] = vt + 0.5 * s_wy2
            else:
                s_w += lam[i]
                s_wy += wy
                o = omega0 + s_w
                bb = s_wy / o
                ob[k, i] = o
                b[k, i] = bb
                vb = vt + 0.5 * (s_wy2 - s_wy * bb)
                if not vb > 0:
                    vb = vt * 1e-12
                    clamps += 1
                v[k, i] = vb
        p_ld = 0.0
        p_wy2 = 0.0
        for i in range(T):
            lw = lp[k, i] - 0.5 * p_ld + glu[i] - ubar[i] * np.log(v[k, i]) - 0.5 * p_wy2
            if kind == MEANVAR:
                lw -= 0.5 * np.log(ob[k, i])
            logw[i] = lw
            p_ld += lam[i] * dm[i]
            p_wy2 += lam[i] * r[i] * r[i]
    if not normalize_row(logw, pi[k], lpb[k]):
        return -1
    return clamps + contributions(k, kinds, b, ob, ubar, v, pi, shift, logprec, dvar)


@njit(cache=True)
def eb_update(y, mu0, loglam0, shift, logprec, dvar):
    """Empirical Bayes intercept and base precision given the component moments."""
    N, T = shift.shape
    s_l = 0.0
    s_lr = 0.0
    lam = np.empty(T)
    r0 = np.empty(T)
    dl = np.empty(T)
    for i in range(T):
        ls = 0.0
        rs = y[i]
        ds = 0.0
        for j in range(N):
            ls += logprec[j, i]
            rs -= shift[j, i]
            ds += dvar[j, i]
        lam[i] = np.exp(ls)
        r0[i] = rs
        dl[i] = ds
        s_l += lam[i]
        s_lr += lam[i] * rs
    mu = s_lr / s_l
    den = 0.0
    for i in range(T):
        d = r0[i] - mu
        den += lam[i] * (d * d + dl[i])
    if den > 0 and np.isfinite(den):
        loglam0 = np.log(T) - np.log(den)
    return mu, loglam0


@njit(cache=True)
def elbo(y, mu0, loglam0, kinds, lp, b, ob, ubar, v, pi, lpb, shift, logprec, dvar,
         omega0, u0, v0, glu, psiu, gl_u0):
    """Evidence lower bound without the constant ``-T/2 log(2 pi)``."""
    N, T = pi.shape
    f = 0.5 * T * loglam0
    for i in range(T):
        r = y[i] - mu0
        ls = loglam0
        ds = 0.0
        for j in range(N):
            r -= shift[j, i]
            ls += logprec[j, i]
            ds += dvar[j, i]
        f -= 0.5 * np.exp(ls) * (r * r + ds)
    for k in range(N):
        kind = kinds[k]
        for i in range(T):
            p = pi[k, i]
            if p <= 0.0:
                continue
            kl = lpb[k, i] - lp[k, i]
            if kind == MEAN:
                o = ob[k, i]
                kl += 0.5 * (np.log(o / omega0) - 1.0 + omega0 * (1.0 / o + b[k, i] * b[k, i]))
            else:
                vv = v[k, i]
                u = ubar[i]
                f += 0.5 * (T - i) * p * (psiu[i] - np.log(vv))
                kl += (u0 * np.log(vv / v0) - glu[i] + gl_u0 + (u - u0) * psiu[i]
                       - (vv - v0) * u / vv)
                if kind == MEANVAR:
                    o = ob[k, i]
                    kl += 0.5 * (np.log(o / omega0) - 1.0 + omega0 / o
                                 + omega0 * u * b[k, i] * b[k, i] / vv)
            f -= p * kl
    return f

"""Brute-force reference values for the single change-point models.

Every function here evaluates the marginal likelihood of the data for each
candidate change location separately, by integrating the conjugate prior in
closed form with scipy's multivariate normal / Student-t densities.  No
cumulative sums are shared between locations, so these are independent of
the O(T) recursions in the package.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, special, stats


def _segment_logpdf_normal(y, prec):
    """log prod N(y_i; 0, 1/prec_i)."""
    return float(np.sum(stats.norm.logpdf(y, scale=1.0 / np.sqrt(prec)))) if len(y) else 0.0


def mean_log_evidence(y, omega, omega0):
    """log p(y | tau = t) for t = 1..T under y_i ~ N(b 1{i >= t}, 1/omega_i), b ~ N(0, 1/omega0)."""
    y = np.asarray(y, float)
    T = y.size
    omega = np.broadcast_to(np.asarray(omega, float), (T,))
    out = np.empty(T)
    for t in range(T):
        head = _segment_logpdf_normal(y[:t], omega[:t])
        tail = y[t:]
        cov = np.diag(1.0 / omega[t:]) + np.ones((tail.size, tail.size)) / omega0
        out[t] = head + stats.multivariate_normal.logpdf(tail, mean=np.zeros(tail.size), cov=cov)
    return out


def mv_mean_log_evidence(y, omega, omega0, Lambda):
    """Multivariate analogue: y_i ~ N_d(b 1{i >= t}, (omega_i Lambda)^-1), b ~ N_d(0, I / omega0)."""
    y = np.asarray(y, float)
    T, d = y.shape
    omega = np.broadcast_to(np.asarray(omega, float), (T,))
    Sigma = np.linalg.inv(Lambda)
    out = np.empty(T)
    for t in range(T):
        head = 0.0
        for i in range(t):
            head += stats.multivariate_normal.logpdf(y[i], mean=np.zeros(d), cov=Sigma / omega[i])
        n = T - t
        cov = np.kron(np.ones((n, n)), np.eye(d) / omega0)
        for k in range(n):
            cov[k * d:(k + 1) * d, k * d:(k + 1) * d] += Sigma / omega[t + k]
        out[t] = head + stats.multivariate_normal.logpdf(y[t:].ravel(), mean=np.zeros(n * d), cov=cov)
    return out


def _rates(v0, shift, T):
    shift = np.zeros(T) if shift is None else np.broadcast_to(np.asarray(shift, float), (T,))
    return v0 + shift


def _rate_correction(u0, v0, v):
    """Keep the Gamma normalizer at ``v0`` when location ``t`` uses rate ``v0 + shift_t``.

    A shifted rate stands for extra data that has already been integrated
    out (the variance correction of the backfitting updates); the prior
    itself is still Gamma(u0, v0).
    """
    return u0 * (np.log(v0) - np.log(v))


def var_log_evidence(y, omega, u0, v0, shift=None):
    """y_i ~ N(0, 1/(omega_i s^{1{i >= t}})), s ~ Gamma(u0, rate v0), rate shifted by ``shift_t``."""
    y = np.asarray(y, float)
    T = y.size
    omega = np.broadcast_to(np.asarray(omega, float), (T,))
    v = _rates(v0, shift, T)
    out = np.empty(T)
    for t in range(T):
        head = _segment_logpdf_normal(y[:t], omega[:t])
        tail = y[t:]
        shape = np.diag(1.0 / omega[t:]) * (v[t] / u0)
        out[t] = head + stats.multivariate_t.logpdf(tail, loc=np.zeros(tail.size), shape=shape, df=2 * u0)
    return out + _rate_correction(u0, v0, v)


def meanvar_log_evidence(y, omega, omega0, u0, v0, shift=None):
    """y_i ~ N(b, 1/(omega_i s)) for i >= t with b | s ~ N(0, 1/(omega0 s)), s ~ Gamma(u0, rate v0)."""
    y = np.asarray(y, float)
    T = y.size
    omega = np.broadcast_to(np.asarray(omega, float), (T,))
    v = _rates(v0, shift, T)
    out = np.empty(T)
    for t in range(T):
        head = _segment_logpdf_normal(y[:t], omega[:t])
        tail = y[t:]
        n = tail.size
        base = np.diag(1.0 / omega[t:]) + np.ones((n, n)) / omega0
        out[t] = head + stats.multivariate_t.logpdf(tail, loc=np.zeros(n), shape=base * (v[t] / u0),
                                                    df=2 * u0)
    return out + _rate_correction(u0, v0, v)


def poisson_log_evidence(y, omega, u0, v0):
    """y_i ~ Poisson(omega_i s^{1{i >= t}}), s ~ Gamma(u0, rate v0).

    The tail integral is computed by adaptive quadrature over log s.
    """
    y = np.asarray(y, float)
    T = y.size
    omega = np.broadcast_to(np.asarray(omega, float), (T,))
    out = np.empty(T)
    for t in range(T):
        head = float(np.sum(stats.poisson.logpmf(y[:t], omega[:t])))
        tail_y, tail_w = y[t:], omega[t:]
        sy, sw = tail_y.sum(), tail_w.sum()
        const = float(np.sum(tail_y * np.log(tail_w) - special.gammaln(tail_y + 1)))
        # integrand in x = log s, scaled by its maximum for stability
        a = u0 + sy

        def log_f(x):
            return a * x - (v0 + sw) * np.exp(x)

        x_star = np.log(a / (v0 + sw))
        peak = log_f(x_star)
        with np.errstate(over="ignore"):
            val, _ = integrate.quad(lambda x: np.exp(log_f(x) - peak), -np.inf, np.inf,
                                    epsabs=0, epsrel=1e-13, limit=400)
        log_prior_const = u0 * np.log(v0) - special.gammaln(u0)
        out[t] = head + const + log_prior_const + peak + np.log(val)
    return out


def posterior_from_evidence(log_ev, pi):
    """Normalized location posterior and the log marginal evidence."""
    pi = np.asarray(pi, float)
    with np.errstate(divide="ignore"):
        w = np.log(pi) + log_ev
    m = np.max(w)
    z = m + np.log(np.sum(np.exp(w - m)))
    return np.exp(w - z), float(z)

"""Closed-form single change-point posteriors.

Four conjugate models are covered, each fitted in one pass with suffix and
prefix cumulative sums:

* ``mean_scp``: a mean shift with known (per-time) precision, univariate or
  multivariate with a constant precision matrix;
* ``var_scp``: a precision shift with Gamma prior;
* ``meanvar_scp``: a simultaneous Normal-Gamma shift;
* ``poisson_scp``: a Poisson rate shift with Gamma prior.

Time indices are 0-based here.  Index ``i`` corresponds to a change at time
``t = i + 1``; the parameter at that index governs ``y[i:]``.  Gamma
distributions use the shape-rate convention, so ``E[s] = u / v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import special

from .errors import DataError, DegenerateWeightsError, DomainError
from .special_math import log_normalizer

__all__ = [
    "MeanScpPosterior",
    "VarScpPosterior",
    "MeanVarScpPosterior",
    "PoissonScpPosterior",
    "ScpMoments",
    "mean_scp",
    "var_scp",
    "meanvar_scp",
    "poisson_scp",
    "component_moments",
    "suffix_sum",
    "suffix_sum_strict",
    "prefix_sum_strict",
]


def suffix_sum(x: np.ndarray) -> np.ndarray:
    """``out[i] = sum(x[i:])`` along the first axis."""
    return np.cumsum(x[::-1], axis=0)[::-1]


def suffix_sum_strict(x: np.ndarray) -> np.ndarray:
    """``out[i] = sum(x[i + 1:])`` along the first axis (zero at the end)."""
    s = suffix_sum(x)
    out = np.zeros_like(s)
    out[:-1] = s[1:]
    return out


def prefix_sum_strict(x: np.ndarray) -> np.ndarray:
    """``out[i] = sum(x[:i])`` along the first axis (zero at ``i = 0``)."""
    c = np.cumsum(x, axis=0)
    out = np.zeros_like(c)
    out[1:] = c[:-1]
    return out


# ---------------------------------------------------------------------------
# posterior containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanScpPosterior:
    """Posterior of a mean change-point component.

    For ``d = 1`` ``b_bar`` and ``omega_bar`` have shape ``(T,)``.  For the
    multivariate model ``b_bar`` is ``(T, d)`` and ``omega_bar`` is
    ``(T, d, d)``; the same precisions are also held in the eigenbasis of the
    constant precision matrix (``eigvecs`` and ``omega_eig``) since every
    ``omega_bar[t]`` shares those eigenvectors.
    """

    kind: ClassVar[str] = "mean"

    b_bar: np.ndarray
    omega_bar: np.ndarray
    pi_bar: np.ndarray
    log_pi_bar: np.ndarray
    eigvecs: np.ndarray | None = None
    omega_eig: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.pi_bar.shape[0]

    @property
    def d(self) -> int:
        return 1 if self.b_bar.ndim == 1 else self.b_bar.shape[1]


@dataclass(frozen=True)
class VarScpPosterior:
    """Posterior of a precision change-point component."""

    kind: ClassVar[str] = "var"

    u_bar: np.ndarray
    v_bar: np.ndarray
    pi_bar: np.ndarray
    log_pi_bar: np.ndarray

    @property
    def T(self) -> int:
        return self.pi_bar.shape[0]


@dataclass(frozen=True)
class MeanVarScpPosterior:
    """Posterior of a joint mean and precision change-point component."""

    kind: ClassVar[str] = "meanvar"

    b_bar: np.ndarray
    omega_bar: np.ndarray
    u_bar: np.ndarray
    v_bar: np.ndarray
    pi_bar: np.ndarray
    log_pi_bar: np.ndarray
    clamped: int = field(default=0, compare=False)

    @property
    def T(self) -> int:
        return self.pi_bar.shape[0]


@dataclass(frozen=True)
class PoissonScpPosterior:
    """Posterior of a Poisson rate change-point component."""

    kind: ClassVar[str] = "poisson"

    u_bar: np.ndarray
    v_bar: np.ndarray
    pi_bar: np.ndarray
    log_pi_bar: np.ndarray

    @property
    def T(self) -> int:
        return self.pi_bar.shape[0]


# ---------------------------------------------------------------------------
# input handling
# ---------------------------------------------------------------------------


def _as_series(y, allow_matrix: bool = False) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim not in ((1, 2) if allow_matrix else (1,)):
        raise DataError(f"series must be {'1-d or 2-d' if allow_matrix else '1-d'}, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise DataError("series must contain at least one observation")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    return arr


def _as_weights(omega, T: int) -> np.ndarray:
    w = np.broadcast_to(np.asarray(omega, dtype=float), (T,))
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise DomainError("precision weights must be finite and strictly positive")
    return w


def _as_positive(x, T: int, name: str) -> np.ndarray:
    v = np.broadcast_to(np.asarray(x, dtype=float), (T,))
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DomainError(f"{name} must be finite and strictly positive")
    return v


def _positive_scalar(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise DomainError(f"{name} must be finite and strictly positive")
    return x


def resolve_log_prior(T: int, pi=None, log_pi=None) -> np.ndarray:
    """Return a length-``T`` log prior from either ``pi`` or ``log_pi``.

    With neither given the uniform prior is used.  The result need not be
    normalized; every posterior is invariant to a constant shift.
    """
    if pi is not None and log_pi is not None:
        raise ValueError("give at most one of pi and log_pi")
    if log_pi is not None:
        lp = np.asarray(log_pi, dtype=float)
        if lp.shape != (T,):
            raise DomainError(f"log prior must have length {T}")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise DomainError("log prior contains NaN or +inf")
    elif pi is not None:
        p = np.asarray(pi, dtype=float)
        if p.shape != (T,):
            raise DomainError(f"prior must have length {T}")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise DomainError("prior entries must be finite and nonnegative")
        with np.errstate(divide="ignore"):
            lp = np.log(p)
    else:
        lp = np.full(T, -np.log(T))
    if not np.any(np.isfinite(lp)):
        raise DegenerateWeightsError("location prior puts zero mass on every index")
    return lp


def _finish(log_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_pi_bar = log_w - log_normalizer(log_w)
    pi_bar = np.exp(log_pi_bar)
    pi_bar /= pi_bar.sum()
    return pi_bar, log_pi_bar


# ---------------------------------------------------------------------------
# mean
# ---------------------------------------------------------------------------


def mean_scp_rotated(z: np.ndarray, eig: np.ndarray, omega: np.ndarray, omega0: float,
                     log_pi: np.ndarray):
    """Multivariate mean posterior in the eigenbasis of the precision matrix.

    ``z`` is the ``(T, d)`` series already rotated into the eigenbasis and
    ``eig`` the eigenvalues, so that time ``t`` has precision
    ``omega[t] * diag(eig)``.  Returns ``(b_rot, omega_eig, pi_bar, log_pi_bar)``.
    """
    s = suffix_sum(omega)
    zs = suffix_sum(omega[:, None] * z) * eig
    denom = omega0 + s[:, None] * eig
    log_w = log_pi - 0.5 * np.log(denom).sum(axis=1) + 0.5 * (zs * zs / denom).sum(axis=1)
    pi_bar, log_pi_bar = _finish(log_w)
    return zs / denom, denom, pi_bar, log_pi_bar


def mean_core(y: np.ndarray, w: np.ndarray, omega0: float, lp: np.ndarray) -> MeanScpPosterior:
    """Univariate mean posterior without input validation."""
    bs = suffix_sum(w * y)
    omega_bar = omega0 + suffix_sum(w)
    log_w = lp - 0.5 * np.log(omega_bar) + 0.5 * bs * bs / omega_bar
    pi_bar, log_pi_bar = _finish(log_w)
    return MeanScpPosterior(bs / omega_bar, omega_bar, pi_bar, log_pi_bar)


def mean_scp(y, omega=1.0, omega0: float = 1e-3, pi=None, *, log_pi=None,
             Lambda=None) -> MeanScpPosterior:
    """Posterior for a single change in the mean.

    Parameters
    ----------
    y : array, shape (T,) or (T, d)
        Observations.
    omega : float or array of shape (T,)
        Per-time precision multipliers.  In the multivariate model time ``t``
        has precision ``omega[t] * Lambda``.
    omega0 : float
        Prior precision of the jump size.
    pi, log_pi : array of shape (T,), optional
        Location prior (probabilities or log-weights); uniform by default.
    Lambda : array of shape (d, d), optional
        Constant precision matrix for multivariate input (identity by default).
    """
    y = _as_series(y, allow_matrix=True)
    T = y.shape[0]
    w = _as_weights(omega, T)
    omega0 = _positive_scalar(omega0, "omega0")
    lp = resolve_log_prior(T, pi, log_pi)

    if y.ndim == 1 and Lambda is None:
        return mean_core(y, w, omega0, lp)

    y2 = y.reshape(T, -1)
    d = y2.shape[1]
    Lam = np.eye(d) if Lambda is None else np.asarray(Lambda, dtype=float)
    if Lam.shape != (d, d):
        raise DomainError(f"Lambda must have shape ({d}, {d})")
    if not np.allclose(Lam, Lam.T, rtol=1e-10, atol=1e-12):
        raise DomainError("Lambda must be symmetric")
    eig, Q = np.linalg.eigh(0.5 * (Lam + Lam.T))
    if np.any(eig <= 0):
        raise DomainError("Lambda must be positive definite")
    b_rot, denom, pi_bar, log_pi_bar = mean_scp_rotated(y2 @ Q, eig, w, omega0, lp)
    b_bar = b_rot @ Q.T
    omega_bar = np.einsum("ij,tj,kj->tik", Q, denom, Q)
    if y.ndim == 1:
        b_bar = b_bar[:, 0]
        omega_bar = omega_bar[:, 0, 0]
        return MeanScpPosterior(b_bar, omega_bar, pi_bar, log_pi_bar)
    return MeanScpPosterior(b_bar, omega_bar, pi_bar, log_pi_bar, eigvecs=Q, omega_eig=denom)


# ---------------------------------------------------------------------------
# var
# ---------------------------------------------------------------------------


def _shape_suffix(T: int, u0: float) -> np.ndarray:
    """``u0 + (T - t + 1) / 2`` for 1-based ``t``, i.e. ``u0 + (T - i) / 2``."""
    return u0 + 0.5 * (T - np.arange(T))


def var_scp(y, omega=1.0, u0: float = 1e-3, v0=1e-3, pi=None, *, log_pi=None) -> VarScpPosterior:
    """Posterior for a single change in the precision of a zero-mean series.

    ``v0`` may be a scalar or a length-``T`` vector of per-location rates.
    """
    y = _as_series(y)
    T = y.shape[0]
    w = _as_weights(omega, T)
    u0 = _positive_scalar(u0, "u0")
    v = _as_positive(v0, T, "v0")
    lp = resolve_log_prior(T, pi, log_pi)
    return var_core(y, w, u0, v, lp)


def var_core(y: np.ndarray, w: np.ndarray, u0: float, v: np.ndarray,
             lp: np.ndarray) -> VarScpPosterior:
    """Variance posterior without input validation."""
    T = y.shape[0]
    wy2 = w * y * y
    u_bar = _shape_suffix(T, u0)
    v_bar = v + 0.5 * suffix_sum(wy2)
    log_w = lp + special.gammaln(u_bar) - u_bar * np.log(v_bar) - 0.5 * prefix_sum_strict(wy2)
    pi_bar, log_pi_bar = _finish(log_w)
    return VarScpPosterior(u_bar, v_bar, pi_bar, log_pi_bar)


# ---------------------------------------------------------------------------
# meanvar
# ---------------------------------------------------------------------------


def meanvar_scp(y, omega=1.0, omega0: float = 1e-3, u0: float = 1e-3, v0=1e-3, pi=None, *,
                log_pi=None) -> MeanVarScpPosterior:
    """Posterior for a single simultaneous change in mean and precision.

    A rate ``v_bar`` that comes out non-positive through cancellation is
    clamped to ``v0 * 1e-12``; the number of clamped entries is reported in
    the ``clamped`` field.
    """
    y = _as_series(y)
    T = y.shape[0]
    w = _as_weights(omega, T)
    omega0 = _positive_scalar(omega0, "omega0")
    u0 = _positive_scalar(u0, "u0")
    v = _as_positive(v0, T, "v0")
    lp = resolve_log_prior(T, pi, log_pi)
    return meanvar_core(y, w, omega0, u0, v, lp)


def meanvar_core(y: np.ndarray, w: np.ndarray, omega0: float, u0: float, v: np.ndarray,
                 lp: np.ndarray) -> MeanVarScpPosterior:
    """Joint posterior without input validation."""
    T = y.shape[0]
    wy = w * y
    wy2 = wy * y
    omega_bar = omega0 + suffix_sum(w)
    bs = suffix_sum(wy)
    b_bar = bs / omega_bar
    u_bar = _shape_suffix(T, u0)
    v_bar = v + 0.5 * (suffix_sum(wy2) - bs * b_bar)
    bad = ~(v_bar > 0)
    clamped = int(bad.sum())
    if clamped:
        v_bar = np.where(bad, v * 1e-12, v_bar)
    log_w = (lp + special.gammaln(u_bar) - u_bar * np.log(v_bar) - 0.5 * np.log(omega_bar)
             - 0.5 * prefix_sum_strict(wy2))
    pi_bar, log_pi_bar = _finish(log_w)
    return MeanVarScpPosterior(b_bar, omega_bar, u_bar, v_bar, pi_bar, log_pi_bar, clamped)


# ---------------------------------------------------------------------------
# poisson
# ---------------------------------------------------------------------------


def as_counts(y) -> np.ndarray:
    """Validate a count series and return it as a float array."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise DomainError("count series must be a non-empty 1-d array")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise DomainError("counts must be nonnegative integers")
    return arr


def poisson_scp(y, omega=1.0, u0: float = 1e-3, v0: float = 1e-3, pi=None, *,
                log_pi=None) -> PoissonScpPosterior:
    """Posterior for a single change in a Poisson rate.

    ``y[t] ~ Poisson(omega[t] * s_t)`` where ``s_t`` is 1 before the change
    and Gamma(u0, v0) distributed from the change onward.
    """
    y = as_counts(y)
    T = y.shape[0]
    w = _as_weights(omega, T)
    u0 = _positive_scalar(u0, "u0")
    v0 = _positive_scalar(v0, "v0")
    lp = resolve_log_prior(T, pi, log_pi)
    return poisson_core(y, w, u0, v0, lp)


def poisson_core(y: np.ndarray, w: np.ndarray, u0: float, v0: float,
                 lp: np.ndarray) -> PoissonScpPosterior:
    """Poisson rate posterior without input validation."""
    u_bar = u0 + suffix_sum(y)
    v_bar = v0 + suffix_sum(w)
    log_w = lp + special.gammaln(u_bar) - u_bar * np.log(v_bar) - prefix_sum_strict(w)
    pi_bar, log_pi_bar = _finish(log_w)
    return PoissonScpPosterior(u_bar, v_bar, pi_bar, log_pi_bar)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScpMoments:
    """Per-time posterior moments of one component.

    Fields that do not apply to a model are ``None``.  The precision moments
    are reported without the known weight ``omega_t``; pass ``omega`` to
    :func:`component_moments` to have them multiplied in.
    """

    mean: np.ndarray | None = None
    var_mu: np.ndarray | None = None
    e_lambda: np.ndarray | None = None
    e_lambda_mu: np.ndarray | None = None
    e_lambda_mu2: np.ndarray | None = None


def component_moments(post, omega=None) -> ScpMoments:
    """Posterior moments of ``mu_t`` and ``lambda_t`` via prefix sums."""
    pi = post.pi_bar
    T = pi.shape[0]
    scale = None if omega is None else _as_weights(omega, T)

    def scaled(x):
        return x if scale is None else x * scale

    if isinstance(post, MeanScpPosterior):
        if post.b_bar.ndim == 1:
            mean = np.cumsum(post.b_bar * pi)
            second = np.cumsum((post.b_bar ** 2 + 1.0 / post.omega_bar) * pi)
            return ScpMoments(mean=mean, var_mu=np.maximum(second - mean * mean, 0.0))
        b = post.b_bar
        mean = np.cumsum(b * pi[:, None], axis=0)
        inv = np.linalg.inv(post.omega_bar)
        second = np.cumsum((np.einsum("ti,tj->tij", b, b) + inv) * pi[:, None, None], axis=0)
        return ScpMoments(mean=mean, var_mu=second - np.einsum("ti,tj->tij", mean, mean))

    if isinstance(post, (VarScpPosterior, PoissonScpPosterior)):
        ratio = post.u_bar / post.v_bar
        e_lam = np.cumsum(pi * ratio) + suffix_sum_strict(pi)
        return ScpMoments(e_lambda=scaled(e_lam))

    if isinstance(post, MeanVarScpPosterior):
        ratio = post.u_bar / post.v_bar
        e_lam = np.cumsum(pi * ratio) + suffix_sum_strict(pi)
        mean = np.cumsum(post.b_bar * pi)
        second = np.cumsum((post.b_bar ** 2 + 1.0 / post.omega_bar) * pi)
        return ScpMoments(
            mean=mean,
            var_mu=np.maximum(second - mean * mean, 0.0),
            e_lambda=scaled(e_lam),
            e_lambda_mu=scaled(np.cumsum(post.b_bar * ratio * pi)),
            e_lambda_mu2=scaled(np.cumsum(pi * (post.b_bar ** 2 * ratio + 1.0 / post.omega_bar))),
        )

    raise TypeError(f"unsupported posterior type {type(post).__name__}")

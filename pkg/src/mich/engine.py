"""Variational backfitting for multiple change-point models.

A fit stacks ``N`` single change-point components.  For Gaussian data the
components come in three classes:

* ``meanvar`` (joint) components shift mean and precision together;
* ``mean`` components shift the mean only;
* ``var`` components shift the precision only.

The mean of ``y_t`` is ``mu0`` plus the sum of all mean shifts and its
precision is ``lambda0`` times the product of all precision shifts.  The
engine maximizes the evidence lower bound ``F`` by coordinate ascent.  Each
component is refitted in turn with the closed-form single change-point
posterior, applied to partial residuals that integrate out every other
component.  ``mu0`` and ``lambda0`` are optionally updated by empirical
Bayes after every component update, so no component is ever fitted
against a stale intercept.

Two further variants are provided: a multivariate mean model with a constant
precision matrix, and a Poisson rate model whose components multiply the
rate.

Internally all time indices are 0-based.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from .errors import DataError, DomainError, EstimatorFailure, NumericalFailure
from .priors import default_kind, make_prior
from .special_math import normalize_log_weights
from .scp import (
    MeanScpPosterior,
    MeanVarScpPosterior,
    PoissonScpPosterior,
    VarScpPosterior,
    as_counts,
    mean_core,
    mean_scp_rotated,
    meanvar_core,
    poisson_core,
    prefix_sum_strict,
    suffix_sum,
    suffix_sum_strict,
    var_core,
)

__all__ = [
    "MODELS",
    "MichConfig",
    "MichFit",
    "ResidualState",
    "backfit",
    "backfit_multivariate",
    "backfit_poisson",
    "compute_elbo",
    "compute_residual_state",
    "corrected_priors",
    "estimate_precision",
    "fit_model",
    "reverse_restart_fit",
]

MODELS = ("gaussian", "multivariate-mean", "poisson")
LAMBDA_FLOOR = 1e-300
POISSON_RATE_FLOOR = 1e-12


@dataclass(frozen=True)
class MichConfig:
    """Model and fitting options.

    ``L``, ``K`` and ``J`` count mean, variance and joint components.  For
    the multivariate and Poisson models only ``L`` is used (mean and rate
    components respectively).  ``prior`` is ``"weighted"`` (the null
    calibrated prior for each class) or ``"uniform"``.
    """

    L: int = 0
    K: int = 0
    J: int = 0
    omega0: float = 1e-3
    u0: float = 1e-3
    v0: float = 1e-3
    prior: str = "weighted"
    tol: float = 1e-5
    max_iters: int = 10_000
    estimate_intercept: bool = True
    reverse_restart: bool = True
    model: str = "gaussian"
    merge: bool = True
    alpha: float = 0.1
    delta: float = 0.5

    def __post_init__(self):
        for name in ("L", "K", "J", "max_iters"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise DomainError(f"{name} must be a nonnegative integer")
        for name in ("omega0", "u0", "v0", "tol", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and strictly positive")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.model not in MODELS:
            raise DomainError(f"model must be one of {MODELS}")
        if self.prior not in ("weighted", "uniform"):
            raise DomainError("prior must be 'weighted' or 'uniform'")
        if self.model != "gaussian" and (self.K or self.J):
            raise DomainError(f"the {self.model} model supports only L components")

    @property
    def N(self) -> int:
        return self.L + self.K + self.J

    def with_counts(self, L: int | None = None, K: int | None = None,
                    J: int | None = None) -> MichConfig:
        return dataclasses.replace(
            self,
            L=self.L if L is None else L,
            K=self.K if K is None else K,
            J=self.J if J is None else J,
        )


@dataclass(frozen=True)
class MichFit:
    """A fitted model.

    ``components`` holds the single change-point posteriors ordered joint,
    mean, variance (their ``kind`` attributes are ``meanvar``, ``mean``,
    ``var`` or ``poisson``).  For the multivariate model ``mu0`` is a vector
    and ``lambda0`` the precision matrix.
    """

    config: MichConfig
    components: tuple
    mu0: float | np.ndarray
    lambda0: float | np.ndarray
    elbo_trace: tuple
    iterations: int
    converged: bool
    T: int
    d: int = 1
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1]

    @property
    def counts(self) -> dict:
        kinds = [c.kind for c in self.components]
        if self.config.model == "gaussian":
            return {"L": kinds.count("mean"), "K": kinds.count("var"), "J": kinds.count("meanvar")}
        return {"L": len(kinds), "K": 0, "J": 0}

    def indices_of(self, kind: str) -> list[int]:
        return [i for i, c in enumerate(self.components) if c.kind == kind]


@dataclass(frozen=True)
class ResidualState:
    """Expected residual, expected precision and variance correction per time."""

    r_tilde: np.ndarray
    lambda_bar: np.ndarray
    delta: np.ndarray


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _class_order(model: str) -> tuple[str, ...]:
    if model == "gaussian":
        return ("meanvar", "mean", "var")
    if model == "multivariate-mean":
        return ("mean",)
    return ("poisson",)


def _class_counts(cfg: MichConfig) -> dict:
    if cfg.model == "gaussian":
        return {"meanvar": cfg.J, "mean": cfg.L, "var": cfg.K}
    return {_class_order(cfg.model)[0]: cfg.L}


def component_log_prior(cfg: MichConfig, kind: str, T: int, d: int = 1) -> np.ndarray:
    """Log location prior used for a component class under ``cfg``."""
    if cfg.prior == "uniform" or kind == "poisson":
        name = "uniform"
    else:
        name = default_kind(kind)
    return make_prior(name, T, d).log_pi


def _kl_pi(pi_bar: np.ndarray, log_pi_bar: np.ndarray, log_pi: np.ndarray) -> np.ndarray:
    """Entrywise ``pi_bar * log(pi_bar / pi)`` with the convention ``0 log 0 = 0``."""
    pos = pi_bar > 0
    out = np.zeros_like(pi_bar)
    out[pos] = pi_bar[pos] * (log_pi_bar[pos] - log_pi[pos])
    return out


def _gamma_kl(u_bar, v_bar, u0, v0) -> np.ndarray:
    """KL(Gamma(u_bar, v_bar) || Gamma(u0, v0)), shape-rate parameters."""
    return (u0 * np.log(v_bar / v0) - special.gammaln(u_bar) + special.gammaln(u0)
            + (u_bar - u0) * special.psi(u_bar) - (v_bar - v0) * u_bar / v_bar)


def corrected_priors(lambda_minus, delta_minus, log_pi, v0):
    """Variance-corrected rate prior and location prior of one component.

    Returns ``(v_tilde, pi_tilde)`` where ``v_tilde[i] = v0 + sum_{i' >= i}
    lambda_minus * delta_minus / 2`` and ``pi_tilde`` is proportional to
    ``pi * exp(-sum_{i' < i} lambda_minus * delta_minus / 2)``.
    """
    ld = np.asarray(lambda_minus, dtype=float) * np.asarray(delta_minus, dtype=float)
    v_tilde = v0 + 0.5 * suffix_sum(ld)
    log_tilde = np.asarray(log_pi, dtype=float) - 0.5 * prefix_sum_strict(ld)
    return v_tilde, normalize_log_weights(log_tilde)


def _correction(lambda_minus: np.ndarray, delta_minus: np.ndarray, log_pi: np.ndarray,
                v0: float) -> tuple[np.ndarray, np.ndarray]:
    ld = lambda_minus * delta_minus
    return v0 + 0.5 * suffix_sum(ld), log_pi - 0.5 * prefix_sum_strict(ld)


def _with_pi(post, pi_bar: np.ndarray, log_pi_bar: np.ndarray):
    return dataclasses.replace(post, pi_bar=pi_bar, log_pi_bar=log_pi_bar)


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


class _Engine:
    """Common coordinate-ascent loop; subclasses define the model algebra."""

    model: str

    def __init__(self, y: np.ndarray, cfg: MichConfig, init: MichFit | None):
        self.y = y
        self.cfg = cfg
        self.T = y.shape[0]
        self.clamps = 0
        kinds = []
        for kind in _class_order(cfg.model):
            kinds += [kind] * _class_counts(cfg)[kind]
        self.kinds = kinds
        self.log_pi = {k: self.log_prior(k) for k in _class_order(cfg.model)}
        warm = {k: [] for k in _class_order(cfg.model)}
        if init is not None:
            self._check_init(init)
            for c in init.components:
                warm[c.kind].append(c)
            self.set_baseline(init.mu0, init.lambda0)
        else:
            self.set_baseline(*self.initial_baseline())
        comps = []
        for kind in _class_order(cfg.model):
            n = _class_counts(cfg)[kind]
            if len(warm[kind]) > n:
                raise DomainError(f"initial fit has more {kind} components than the configuration")
            comps += warm[kind] + [self.null_component(kind) for _ in range(n - len(warm[kind]))]
        self.comps = comps
        self.setup_contributions()

    def _check_init(self, init: MichFit) -> None:
        if init.T != self.T:
            raise DomainError("initial fit has a different series length")
        if init.config.model != self.cfg.model:
            raise DomainError("initial fit belongs to a different model")

    def log_prior(self, kind: str) -> np.ndarray:
        return component_log_prior(self.cfg, kind, self.T)

    # -- hooks -------------------------------------------------------------
    def set_baseline(self, mu0, lambda0) -> None:
        raise NotImplementedError

    def initial_baseline(self):
        raise NotImplementedError

    def null_component(self, kind: str):
        raise NotImplementedError

    def setup_contributions(self) -> None:
        raise NotImplementedError

    def update(self, i: int, keep_pi=None) -> None:
        raise NotImplementedError

    def eb_update(self) -> None:
        raise NotImplementedError

    def elbo(self) -> float:
        raise NotImplementedError

    def to_fit(self, trace, iterations, converged, diagnostics) -> MichFit:
        raise NotImplementedError

    # -- driver ------------------------------------------------------------
    def run(self) -> MichFit:
        cfg = self.cfg
        f0 = self.elbo()
        if not np.isfinite(f0):
            raise NumericalFailure("initial ELBO is not finite", iteration=0)
        trace = [f0]
        converged = False
        it = 0
        for it in range(1, cfg.max_iters + 1):
            for i in range(self.n_components):
                self.update(i)
                if cfg.estimate_intercept:
                    self.eb_update()
            f = self.elbo()
            if not np.isfinite(f):
                raise NumericalFailure(f"ELBO became non-finite at iteration {it}", iteration=it)
            prev = trace[-1]
            trace.append(f)
            gain = f - prev
            if gain < cfg.tol * abs(prev) or abs(gain) < 1e-12:
                converged = True
                break
        if cfg.max_iters == 0:
            it = 0
        return self.to_fit(trace, it, converged, {"clamps": self.clamps})

    @property
    def n_components(self) -> int:
        return len(self.comps)

    def set_pi(self, i: int, pi_bar: np.ndarray, log_pi_bar: np.ndarray) -> None:
        self.comps[i] = _with_pi(self.comps[i], pi_bar, log_pi_bar)
        self._set(i)

    def conditional_pass(self, mapped: list[tuple[np.ndarray, np.ndarray]]) -> None:
        """Refit every component's conditional parameters with fixed location weights."""
        for i, (pi_bar, log_pi_bar) in enumerate(mapped):
            self.set_pi(i, pi_bar, log_pi_bar)
        for _ in range(2):
            for i, keep in enumerate(mapped):
                self.update(i, keep_pi=keep)
        if self.cfg.estimate_intercept:
            self.eb_update()


class _GaussianEngine(_Engine):
    """Univariate Gaussian model; the sweeps run in compiled kernels."""

    model = "gaussian"
    _CODES = {"mean": _kernels.MEAN, "var": _kernels.VAR, "meanvar": _kernels.MEANVAR}

    def set_baseline(self, mu0, lambda0) -> None:
        self.mu0 = float(mu0)
        self.log_lam0 = math.log(float(lambda0))

    def initial_baseline(self):
        if not self.cfg.estimate_intercept:
            return 0.0, 1.0
        y = self.y
        scale = max(float(np.var(y)), 1e-8 * max(1.0, float(np.mean(y * y))), 1e-300)
        return float(np.mean(y)), 1.0 / scale

    def null_component(self, kind: str):
        T, cfg = self.T, self.cfg
        lp = self.log_pi[kind]
        pi = np.exp(lp)
        rem = T - np.arange(T, dtype=float)
        if kind == "mean":
            return MeanScpPosterior(np.zeros(T), cfg.omega0 + rem, pi, lp.copy())
        u = cfg.u0 + 0.5 * rem
        if kind == "var":
            return VarScpPosterior(u, u.copy(), pi, lp.copy())
        return MeanVarScpPosterior(np.zeros(T), cfg.omega0 + rem, u, u.copy(), pi, lp.copy())

    def setup_contributions(self) -> None:
        T, cfg = self.T, self.cfg
        n = len(self.comps)
        self.ubar = cfg.u0 + 0.5 * (T - np.arange(T, dtype=float))
        self.glu = special.gammaln(self.ubar)
        self.psiu = special.psi(self.ubar)
        self.gl_u0 = float(special.gammaln(cfg.u0))
        self.codes = np.array([self._CODES[c.kind] for c in self.comps], dtype=np.int64)
        self.lp = np.zeros((n, T))
        self.b = np.zeros((n, T))
        self.ob = np.ones((n, T))
        self.v = np.ones((n, T))
        self.pi = np.zeros((n, T))
        self.lpb = np.zeros((n, T))
        for k, c in enumerate(self.comps):
            self.lp[k] = self.log_pi[c.kind]
            self.pi[k] = c.pi_bar
            self.lpb[k] = c.log_pi_bar
            if c.kind != "var":
                self.b[k] = c.b_bar
                self.ob[k] = c.omega_bar
            if c.kind != "mean":
                self.v[k] = c.v_bar
        self.shift = np.zeros((n, T))
        self.logprec = np.zeros((n, T))
        self.dvar = np.zeros((n, T))
        for k in range(n):
            self._refresh(k)
        self.comps = None

    def _refresh(self, k: int) -> None:
        self.clamps += _kernels.contributions(k, self.codes, self.b, self.ob, self.ubar, self.v,
                                              self.pi, self.shift, self.logprec, self.dvar)

    @property
    def n_components(self) -> int:
        return self.codes.shape[0]

    def set_pi(self, k: int, pi_bar: np.ndarray, log_pi_bar: np.ndarray) -> None:
        self.pi[k] = pi_bar
        self.lpb[k] = log_pi_bar
        self._refresh(k)

    def update(self, i: int, keep_pi=None) -> None:
        cfg = self.cfg
        out = _kernels.update(i, self.y, self.mu0, self.log_lam0, self.codes, self.lp, self.b,
                              self.ob, self.ubar, self.v, self.pi, self.lpb, self.shift,
                              self.logprec, self.dvar, cfg.omega0, cfg.v0, self.glu)
        if out < 0:
            raise NumericalFailure(f"location weights of component {i} became degenerate")
        self.clamps += out
        if keep_pi is not None:
            self.set_pi(i, *keep_pi)

    def eb_update(self) -> None:
        self.mu0, self.log_lam0 = _kernels.eb_update(self.y, self.mu0, self.log_lam0, self.shift,
                                                     self.logprec, self.dvar)

    def elbo(self) -> float:
        cfg = self.cfg
        return float(_kernels.elbo(self.y, self.mu0, self.log_lam0, self.codes, self.lp, self.b,
                                   self.ob, self.ubar, self.v, self.pi, self.lpb, self.shift,
                                   self.logprec, self.dvar, cfg.omega0, cfg.u0, cfg.v0, self.glu,
                                   self.psiu, self.gl_u0))

    def residual_state(self) -> ResidualState:
        r = self.y - self.mu0 - self.shift.sum(axis=0)
        lam = np.exp(self.log_lam0 + self.logprec.sum(axis=0))
        return ResidualState(r, lam, self.dvar.sum(axis=0))

    def posteriors(self) -> tuple:
        out = []
        for k, code in enumerate(self.codes):
            pi, lpb = self.pi[k].copy(), self.lpb[k].copy()
            if code == _kernels.MEAN:
                out.append(MeanScpPosterior(self.b[k].copy(), self.ob[k].copy(), pi, lpb))
            elif code == _kernels.VAR:
                out.append(VarScpPosterior(self.ubar.copy(), self.v[k].copy(), pi, lpb))
            else:
                out.append(MeanVarScpPosterior(self.b[k].copy(), self.ob[k].copy(), self.ubar.copy(),
                                               self.v[k].copy(), pi, lpb))
        return tuple(out)

    def to_fit(self, trace, iterations, converged, diagnostics) -> MichFit:
        return MichFit(self.cfg, self.posteriors(), self.mu0, math.exp(self.log_lam0),
                       tuple(trace), iterations, converged, self.T, 1, diagnostics)


class _MultivariateEngine(_Engine):
    """Mean components for ``(T, d)`` data with constant precision ``Lambda``.

    Work happens in the eigenbasis of ``Lambda`` where every posterior
    precision is diagonal.
    """

    model = "multivariate-mean"

    def __init__(self, y: np.ndarray, cfg: MichConfig, init: MichFit | None, Lambda: np.ndarray):
        self.d = y.shape[1]
        eig, Q = np.linalg.eigh(0.5 * (Lambda + Lambda.T))
        if np.any(eig <= 0):
            raise DomainError("precision matrix must be positive definite")
        self.Lambda = Lambda
        self.eig, self.Q = eig, Q
        self.z = y @ Q
        super().__init__(y, cfg, init)

    def log_prior(self, kind: str) -> np.ndarray:
        return component_log_prior(self.cfg, kind, self.T, self.d)

    def _check_init(self, init: MichFit) -> None:
        super()._check_init(init)
        if not np.allclose(init.lambda0, self.Lambda):
            raise DomainError("initial fit was computed with a different precision matrix")

    def set_baseline(self, mu0, lambda0) -> None:
        self.mu_rot = np.asarray(mu0, dtype=float) @ self.Q

    def initial_baseline(self):
        mu0 = self.y.mean(axis=0) if self.cfg.estimate_intercept else np.zeros(self.d)
        return mu0, self.Lambda

    def _to_rot(self, post: MeanScpPosterior) -> _RotMean:
        b = np.asarray(post.b_bar).reshape(self.T, self.d)
        if post.omega_eig is not None and post.eigvecs is not None and np.allclose(post.eigvecs, self.Q):
            denom = post.omega_eig
        else:
            omega = np.asarray(post.omega_bar).reshape(self.T, self.d, self.d)
            denom = np.einsum("ij,tik,kj->tj", self.Q, omega, self.Q)
        return _RotMean(b @ self.Q, denom, post.pi_bar, post.log_pi_bar)

    def null_component(self, kind: str):
        T = self.T
        lp = self.log_pi[kind]
        rem = T - np.arange(T, dtype=float)
        denom = self.cfg.omega0 + rem[:, None] * self.eig
        return _RotMean(np.zeros((T, self.d)), denom, np.exp(lp), lp.copy())

    def setup_contributions(self) -> None:
        self.comps = [self._to_rot(c) if isinstance(c, MeanScpPosterior) else c
                      for c in self.comps]
        n = len(self.comps)
        self.shift = np.zeros((n, self.T, self.d))
        self.var = np.zeros((n, self.T, self.d))
        for i in range(n):
            self._set(i)

    def _set(self, i: int) -> None:
        c = self.comps[i]
        pi = c.pi_bar[:, None]
        m = np.cumsum(c.b * pi, axis=0)
        second = np.cumsum((c.b ** 2 + 1.0 / c.denom) * pi, axis=0)
        self.shift[i] = m
        self.var[i] = np.maximum(second - m * m, 0.0)

    def residual(self) -> np.ndarray:
        return self.z - self.mu_rot - self.shift.sum(axis=0)

    def update(self, i: int, keep_pi=None) -> None:
        r_m = self.residual() + self.shift[i]
        b, denom, pi_bar, log_pi_bar = mean_scp_rotated(
            r_m, self.eig, np.ones(self.T), self.cfg.omega0, self.log_pi["mean"])
        if keep_pi is not None:
            pi_bar, log_pi_bar = keep_pi
        self.comps[i] = _RotMean(b, denom, pi_bar, log_pi_bar)
        self._set(i)

    def eb_update(self) -> None:
        self.mu_rot = (self.z - self.shift.sum(axis=0)).mean(axis=0)

    def elbo(self) -> float:
        cfg = self.cfg
        e = self.eig
        r = self.residual()
        f = 0.5 * self.T * float(np.sum(np.log(e)))
        f -= 0.5 * float(np.sum(r * r * e) + np.sum(self.var * e))
        lp = self.log_pi["mean"]
        for c in self.comps:
            pos = c.pi_bar > 0
            denom, b = c.denom[pos], c.b[pos]
            kl = 0.5 * (np.log(denom / cfg.omega0).sum(axis=1) - self.d
                        + cfg.omega0 * (1.0 / denom + b * b).sum(axis=1))
            f -= float(np.sum(c.pi_bar[pos] * kl + _kl_pi(c.pi_bar, c.log_pi_bar, lp)[pos]))
        return f

    def to_fit(self, trace, iterations, converged, diagnostics) -> MichFit:
        Q = self.Q
        comps = []
        for c in self.comps:
            omega_bar = np.einsum("ij,tj,kj->tik", Q, c.denom, Q)
            comps.append(MeanScpPosterior(c.b @ Q.T, omega_bar, c.pi_bar, c.log_pi_bar, Q, c.denom))
        return MichFit(self.cfg, tuple(comps), self.mu_rot @ Q.T, self.Lambda, tuple(trace),
                       iterations, converged, self.T, self.d, diagnostics)


@dataclass
class _RotMean:
    """Mean component held in the eigenbasis (internal to the multivariate engine)."""

    kind = "mean"
    b: np.ndarray
    denom: np.ndarray
    pi_bar: np.ndarray
    log_pi_bar: np.ndarray


class _PoissonEngine(_Engine):
    """Rate components for count data; ``y_t ~ Poisson(lambda0 * prod_l s_lt)``."""

    model = "poisson"

    def set_baseline(self, mu0, lambda0) -> None:
        self.lam0 = float(lambda0)

    def initial_baseline(self):
        if not self.cfg.estimate_intercept:
            return 0.0, 1.0
        return 0.0, max(float(np.mean(self.y)), POISSON_RATE_FLOOR)

    def null_component(self, kind: str):
        lp = self.log_pi[kind]
        u = np.full(self.T, self.cfg.u0)
        return PoissonScpPosterior(u, u.copy(), np.exp(lp), lp.copy())

    def _set(self, i: int) -> None:
        c = self.comps[i]
        e_lam = np.cumsum(c.pi_bar * c.u_bar / c.v_bar) + suffix_sum_strict(c.pi_bar)
        self.loglam[i] = np.log(np.maximum(e_lam, LAMBDA_FLOOR))

    def setup_contributions(self) -> None:
        self.loglam = np.zeros((len(self.comps), self.T))
        for i in range(len(self.comps)):
            self._set(i)

    def update(self, i: int, keep_pi=None) -> None:
        w = self.lam0 * np.exp(self.loglam.sum(axis=0) - self.loglam[i])
        new = poisson_core(self.y, w, self.cfg.u0, self.cfg.v0, self.log_pi["poisson"])
        if keep_pi is not None:
            new = _with_pi(new, *keep_pi)
        self.comps[i] = new
        self._set(i)

    def eb_update(self) -> None:
        total = float(np.sum(np.exp(self.loglam.sum(axis=0))))
        self.lam0 = max(float(np.sum(self.y)) / total, POISSON_RATE_FLOOR)

    def elbo(self) -> float:
        cfg = self.cfg
        y = self.y
        e_log = np.full(self.T, math.log(self.lam0))
        for c in self.comps:
            e_log += np.cumsum(c.pi_bar * (special.psi(c.u_bar) - np.log(c.v_bar)))
        f = float(np.sum(y * e_log - self.lam0 * np.exp(self.loglam.sum(axis=0))
                         - special.gammaln(y + 1.0)))
        lp = self.log_pi["poisson"]
        for c in self.comps:
            pos = c.pi_bar > 0
            kl = _gamma_kl(c.u_bar[pos], c.v_bar[pos], cfg.u0, cfg.v0)
            f -= float(np.sum(c.pi_bar[pos] * kl + _kl_pi(c.pi_bar, c.log_pi_bar, lp)[pos]))
        return f

    def to_fit(self, trace, iterations, converged, diagnostics) -> MichFit:
        return MichFit(self.cfg, tuple(self.comps), 0.0, self.lam0, tuple(trace), iterations,
                       converged, self.T, 1, diagnostics)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def _gaussian_series(y) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise DataError("Gaussian model expects a non-empty 1-d series")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    return arr


def _make_engine(y, cfg: MichConfig, init: MichFit | None = None, Lambda=None) -> _Engine:
    if cfg.model == "gaussian":
        return _GaussianEngine(_gaussian_series(y), cfg, init)
    if cfg.model == "poisson":
        try:
            counts = as_counts(y)
        except DomainError as exc:
            raise DataError(str(exc)) from None
        return _PoissonEngine(counts, cfg, init)
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DataError("multivariate model expects a (T, d) array")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    if Lambda is None:
        Lambda = init.lambda0 if init is not None else estimate_precision(arr)
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape != (arr.shape[1], arr.shape[1]):
        raise DomainError("precision matrix has the wrong shape")
    if Lambda.ndim != 2:
        raise DomainError("only a constant precision matrix is supported")
    return _MultivariateEngine(arr, cfg, init, Lambda)


def backfit(y, cfg: MichConfig, init: MichFit | None = None) -> MichFit:
    """Fit the Gaussian model by coordinate ascent on the ELBO.

    ``init`` warm-starts the fit; it may hold fewer components of a class
    than ``cfg`` asks for, in which case null components are appended.
    """
    if cfg.model != "gaussian":
        raise DomainError("backfit handles the gaussian model; see backfit_multivariate/backfit_poisson")
    return _make_engine(y, cfg, init).run()


def backfit_multivariate(y, cfg: MichConfig, Lambda=None, init: MichFit | None = None) -> MichFit:
    """Fit the multivariate mean model.

    When ``Lambda`` is omitted it is estimated once from first differences.
    """
    if cfg.model != "multivariate-mean":
        cfg = dataclasses.replace(cfg, model="multivariate-mean")
    return _make_engine(y, cfg, init, Lambda).run()


def backfit_poisson(y, cfg: MichConfig, init: MichFit | None = None) -> MichFit:
    """Fit the Poisson rate model."""
    if cfg.model != "poisson":
        cfg = dataclasses.replace(cfg, model="poisson")
    return _make_engine(y, cfg, init).run()


def _fit_once(y, cfg: MichConfig, init: MichFit | None = None, Lambda=None) -> MichFit:
    return _make_engine(y, cfg, init, Lambda).run()


def estimate_precision(y) -> np.ndarray:
    """Difference-based estimate of a constant precision matrix.

    Uses ``y_t - y_{t-1}``, which removes piecewise-constant means except at
    the few change points, and inverts half their sample covariance.
    """
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    T, d = arr.shape
    if T < 3 or d >= T - 1:
        raise EstimatorFailure(
            f"cannot estimate a {d}x{d} precision matrix from {T} observations; supply Lambda")
    diff = np.diff(arr, axis=0)
    centred = diff - diff.mean(axis=0)
    cov = centred.T @ centred / (2.0 * (T - 2))
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise EstimatorFailure("difference covariance is singular; supply Lambda") from None
    prec = np.linalg.inv(cov)
    return 0.5 * (prec + prec.T)


def compute_elbo(fit: MichFit, y, state: ResidualState | None = None) -> float:
    """Evaluate the ELBO of ``fit`` on ``y`` (the constant ``-T/2 log 2 pi`` is omitted)."""
    engine = _make_engine(y, fit.config, fit)
    return engine.elbo()


def compute_residual_state(fit: MichFit, y) -> ResidualState:
    """Expected residual, precision and variance correction of a Gaussian fit."""
    if fit.config.model != "gaussian":
        raise DomainError("residual state is defined for the gaussian model")
    return _make_engine(y, fit.config, fit).residual_state()


# ---------------------------------------------------------------------------
# reverse restart
# ---------------------------------------------------------------------------


def _reverse_series(y):
    return np.asarray(y)[::-1].copy()


def _map_reversed(pi_rev: np.ndarray, log_pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map location weights of a reversed fit back to forward time.

    A change at reversed 1-based time ``t'`` splits the series at forward
    time ``T - t' + 2``.  Mass that lands outside ``2..T`` or where the
    prior is zero is dropped; if nothing is left the prior is returned.
    """
    T = pi_rev.shape[0]
    pi = np.zeros(T)
    pi[1:] = pi_rev[:0:-1]
    pi[~np.isfinite(log_pi)] = 0.0
    s = pi.sum()
    if not s > 0:
        pi = np.exp(log_pi - np.max(log_pi))
        s = pi.sum()
    pi = pi / s
    with np.errstate(divide="ignore"):
        return pi, np.log(pi)


def restart_from_reverse(y, cfg: MichConfig, reversed_fit: MichFit, Lambda=None) -> MichFit:
    """Run a forward fit initialized from a fit to the reversed series."""
    engine = _make_engine(y, cfg, None, Lambda)
    mapped = []
    for i, rc in enumerate(reversed_fit.components):
        lp = engine.log_pi[engine.kinds[i]]
        mapped.append(_map_reversed(rc.pi_bar, lp))
    engine.conditional_pass(mapped)
    return engine.run()


def reverse_restart_fit(y, cfg: MichConfig, init: MichFit | None = None, Lambda=None,
                        parallel: bool = False) -> MichFit:
    """Fit forward and from a reversed-series initialization; keep the higher ELBO.

    With ``cfg.reverse_restart`` false this is a plain forward fit.
    """
    if cfg.model == "multivariate-mean" and Lambda is None:
        arr = np.asarray(y, dtype=float)
        Lambda = estimate_precision(arr if arr.ndim == 2 else arr[:, None])
    if not cfg.reverse_restart or cfg.N == 0:
        return _fit_once(y, cfg, init, Lambda)
    y_rev = _reverse_series(y)

    def forward():
        return _fit_once(y, cfg, init, Lambda)

    def restarted():
        rev = _fit_once(y_rev, cfg, None, Lambda)
        return restart_from_reverse(y, cfg, rev, Lambda)

    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            f1, f2 = pool.submit(forward), pool.submit(restarted)
            fwd, alt = f1.result(), f2.result()
    else:
        fwd, alt = forward(), restarted()
    best, other = (alt, fwd) if alt.elbo > fwd.elbo else (fwd, alt)
    diag = dict(best.diagnostics)
    diag["restarts"] = diag.get("restarts", 0) + 1
    diag["restart_won"] = best is alt
    diag["clamps"] = best.diagnostics.get("clamps", 0) + other.diagnostics.get("clamps", 0)
    return dataclasses.replace(best, diagnostics=diag)


def fit_model(y, cfg: MichConfig, init: MichFit | None = None, Lambda=None) -> MichFit:
    """Fit ``cfg.model`` with the reverse restart when it is enabled."""
    return reverse_restart_fit(y, cfg, init=init, Lambda=Lambda)

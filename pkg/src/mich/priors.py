"""Location priors for the change-point index.

Besides the uniform prior, three "weighted" priors are provided.  Each is
chosen so that, when the data contain no change at all, the expected log
posterior odds between neighbouring locations vanish.  Without that
correction a single change-point posterior drifts towards the end of the
series under the null, because later locations fit fewer observations with
free parameters.

The weighted priors are defined through recurrences on ``log pi``; they are
computed exactly with the log-gamma and digamma functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError
from .special_math import normalize_log_weights

__all__ = [
    "LocationPrior",
    "PRIOR_KINDS",
    "uniform_prior",
    "weighted_mean_prior",
    "weighted_var_prior",
    "weighted_meanvar_prior",
    "make_prior",
    "default_kind",
]

PRIOR_KINDS = ("uniform", "weighted-mean", "weighted-var", "weighted-meanvar")


@dataclass(frozen=True)
class LocationPrior:
    """A prior over the change location ``t = 1..T`` (stored 0-based)."""

    pi: np.ndarray
    kind: str
    zero_tail: int = 0

    @property
    def T(self) -> int:
        return self.pi.shape[0]

    @property
    def log_pi(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pi)


def _check_T(T, minimum: int) -> int:
    if int(T) != T or T < minimum:
        raise DomainError(f"T must be an integer >= {minimum}, got {T}")
    return int(T)


def _frozen(p: np.ndarray) -> np.ndarray:
    p.setflags(write=False)
    return p


def uniform_prior(T: int) -> LocationPrior:
    """``pi_t = 1 / T``."""
    T = _check_T(T, 1)
    return LocationPrior(_frozen(np.full(T, 1.0 / T)), "uniform")


def weighted_mean_prior(T: int, d: int = 1) -> LocationPrior:
    """Null-calibrated prior for the mean model: ``pi_t`` proportional to ``(T - t + 1)^(d/2)``."""
    T = _check_T(T, 1)
    if int(d) != d or d < 1:
        raise DomainError(f"d must be a positive integer, got {d}")
    remaining = T - np.arange(T)
    return LocationPrior(_frozen(normalize_log_weights(0.5 * d * np.log(remaining / T))),
                         "weighted-mean")


def var_increments(T: int) -> np.ndarray:
    """``log pi_{t+1} - log pi_t`` for the variance prior, ``t = 1..T-1``."""
    n = T - np.arange(1, T, dtype=float)  # n = T - t
    a, b = 0.5 * (n + 1), 0.5 * n
    return special.gammaln(a) - special.gammaln(b) + 0.5 + b * special.psi(b) - a * special.psi(a)


def meanvar_increments(T: int) -> np.ndarray:
    """``log pi_{t+1} - log pi_t`` for the joint prior, ``t = 1..T-2``."""
    n = T - np.arange(1, T - 1, dtype=float)  # n = T - t >= 2
    return (0.5 + 0.5 * np.log(n / (n + 1)) + special.gammaln(0.5 * (n + 1))
            - special.gammaln(0.5 * n) + 0.5 * n * special.psi(0.5 * (n - 1))
            - 0.5 * (n + 1) * special.psi(0.5 * n))


def weighted_var_prior(T: int) -> LocationPrior:
    """Null-calibrated prior for the variance model."""
    T = _check_T(T, 2)
    log_pi = np.concatenate([[0.0], np.cumsum(var_increments(T))])
    return LocationPrior(_frozen(normalize_log_weights(log_pi)), "weighted-var")


def weighted_meanvar_prior(T: int) -> LocationPrior:
    """Null-calibrated prior for the joint mean and variance model.

    The final location carries a single observation, which cannot identify
    both a new mean and a new precision, so ``pi_T = 0``.
    """
    T = _check_T(T, 2)
    log_pi = np.concatenate([[0.0], np.cumsum(meanvar_increments(T)), [-np.inf]])
    return LocationPrior(_frozen(normalize_log_weights(log_pi)), "weighted-meanvar", zero_tail=1)


def default_kind(component_class: str) -> str:
    """Default weighted prior for a component class (mean, var, meanvar)."""
    try:
        return {"mean": "weighted-mean", "var": "weighted-var", "meanvar": "weighted-meanvar"}[
            component_class]
    except KeyError:
        raise DomainError(f"no weighted prior for component class {component_class!r}") from None


@lru_cache(maxsize=256)
def make_prior(kind: str, T: int, d: int = 1) -> LocationPrior:
    """Construct a prior by name; results are cached and read-only.

    The variance and joint priors need ``T >= 2``; for ``T = 1`` they fall
    back to the (trivial) uniform prior.
    """
    if kind == "uniform":
        return uniform_prior(T)
    if kind == "weighted-mean":
        return weighted_mean_prior(T, d)
    if kind in ("weighted-var", "weighted-meanvar") and T == 1:
        return uniform_prior(1)
    if kind == "weighted-var":
        return weighted_var_prior(T)
    if kind == "weighted-meanvar":
        return weighted_meanvar_prior(T)
    raise DomainError(f"unknown prior kind {kind!r}; expected one of {PRIOR_KINDS}")

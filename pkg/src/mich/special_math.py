"""Special functions and log-space helpers.

``log_gamma`` and ``digamma`` are thin, domain-checked wrappers around
:mod:`scipy.special`, which is accurate to near machine precision over the
range the posteriors need.  ``normalize_log_weights`` is the stable softmax
used for every change-point location posterior.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import DegenerateWeightsError, DomainError

__all__ = ["log_gamma", "digamma", "normalize_log_weights", "log_normalizer"]


def _check_positive(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires strictly positive arguments")
    return arr


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0`` (scalar or array)."""
    arr = _check_positive(x, "log_gamma")
    out = special.gammaln(arr)
    return float(out) if np.ndim(out) == 0 else out


def digamma(x):
    """Digamma function ``psi(x)`` for ``x > 0`` (scalar or array)."""
    arr = _check_positive(x, "digamma")
    out = special.psi(arr)
    return float(out) if np.ndim(out) == 0 else out


def log_normalizer(w) -> float:
    """Return ``log(sum(exp(w)))`` computed stably; ``-inf`` entries are ignored."""
    w = np.asarray(w, dtype=float)
    finite = np.isfinite(w)
    if not finite.any():
        raise DegenerateWeightsError("log-weights contain no finite entry")
    if np.any(np.isnan(w)) or np.any(w == np.inf):
        raise DegenerateWeightsError("log-weights contain NaN or +inf")
    m = w[finite].max()
    return float(m + np.log(np.exp(w[finite] - m).sum()))


def normalize_log_weights(w) -> np.ndarray:
    """Map log-domain weights to a probability vector proportional to ``exp(w)``.

    The largest finite entry is subtracted before exponentiation, so the
    result is unchanged when a constant is added to every entry.
    """
    w = np.asarray(w, dtype=float)
    finite = np.isfinite(w)
    if not finite.any():
        raise DegenerateWeightsError("log-weights contain no finite entry")
    if np.any(np.isnan(w)) or np.any(w == np.inf):
        raise DegenerateWeightsError("log-weights contain NaN or +inf")
    m = w[finite].max()
    p = np.zeros_like(w)
    p[finite] = np.exp(w[finite] - m)
    return p / p.sum()

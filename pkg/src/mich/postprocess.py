"""From fitted posteriors to decisions.

MAP locations, minimum-cardinality credible sets, the detection rule,
removal of duplicate components and automatic choice of the component
counts.  Location indices returned by this module are 0-based.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .engine import MichConfig, MichFit, _fit_once, estimate_precision, fit_model
from .errors import DomainError

__all__ = [
    "CredibleSet",
    "ComponentReport",
    "ChangeReport",
    "map_estimate",
    "credible_set",
    "detection_threshold",
    "detect",
    "summarize",
    "merge_duplicates",
    "auto_select",
    "detect_changes",
]

_CLASS_LETTER = {"mean": "L", "var": "K", "meanvar": "J", "poisson": "L"}
_LETTER_CLASS = {"L": "mean", "K": "var", "J": "meanvar"}


@dataclass(frozen=True)
class CredibleSet:
    """Smallest set of locations holding at least ``1 - alpha`` posterior mass."""

    indices: tuple
    mass: float
    alpha: float
    detected: bool | None = None

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, t) -> bool:
        return t in self.indices


@dataclass(frozen=True)
class ComponentReport:
    cls: str
    map_index: int
    map_probability: float
    credible_set: CredibleSet

    @property
    def detected(self) -> bool:
        return bool(self.credible_set.detected)


@dataclass(frozen=True)
class ChangeReport:
    components: tuple
    counts: dict

    @property
    def N_hat(self) -> int:
        return sum(c.detected for c in self.components)

    def detected_locations(self) -> list[int]:
        """Sorted distinct MAP indices of the detected components."""
        return sorted({c.map_index for c in self.components if c.detected})


def map_estimate(pi_bar) -> int:
    """Index of the largest probability; ties go to the smallest index."""
    return int(np.argmax(np.asarray(pi_bar)))


def credible_set(pi_bar, alpha: float) -> CredibleSet:
    """Add locations in decreasing probability until the mass reaches ``1 - alpha``.

    Ties are broken toward the smaller index.  Taking the largest remaining
    probabilities first gives a set of minimum cardinality.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    p = np.asarray(pi_bar, dtype=float)
    order = np.lexsort((np.arange(p.size), -p))
    csum = np.cumsum(p[order])
    # tolerate rounding in the cumulative sum when the target is met exactly
    target = (1.0 - alpha) * (1.0 - 1e-12)
    k = int(np.searchsorted(csum, target, side="left")) + 1
    k = min(k, p.size)
    chosen = np.sort(order[:k])
    return CredibleSet(tuple(int(i) for i in chosen), float(p[chosen].sum()), alpha)


def detection_threshold(T: int, delta: float) -> float:
    """``(ln T)^(1 + delta)``."""
    return math.log(T) ** (1.0 + delta) if T > 1 else 0.0


def detect(cs: CredibleSet, T: int, delta: float = 0.5) -> bool:
    """A component detects a change when its credible set is small enough."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    return len(cs) <= detection_threshold(T, delta)


def summarize(fit: MichFit, alpha: float | None = None, delta: float | None = None) -> ChangeReport:
    """Per-component MAP, credible set and detection decision."""
    alpha = fit.config.alpha if alpha is None else alpha
    delta = fit.config.delta if delta is None else delta
    comps = []
    for c in fit.components:
        cs = credible_set(c.pi_bar, alpha)
        cs = dataclasses.replace(cs, detected=detect(cs, fit.T, delta))
        m = map_estimate(c.pi_bar)
        comps.append(ComponentReport(c.kind, m, float(c.pi_bar[m]), cs))
    counts = dict(fit.counts)
    for letter in ("L", "K", "J"):
        counts[f"{letter}_hat"] = 0
    for c in comps:
        if c.detected:
            counts[f"{_CLASS_LETTER[c.cls]}_hat"] += 1
    return ChangeReport(tuple(comps), counts)


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------


def _drop_component(fit: MichFit, index: int) -> MichFit:
    kind = fit.components[index].kind
    letter = _CLASS_LETTER[kind]
    cfg = fit.config.with_counts(**{letter: getattr(fit.config, letter) - 1})
    comps = fit.components[:index] + fit.components[index + 1:]
    return dataclasses.replace(fit, config=cfg, components=comps)


def _duplicate_pair(fit: MichFit, beta: float, alpha_gate: float, delta: float):
    gated = [i for i, c in enumerate(fit.components)
             if detect(credible_set(c.pi_bar, alpha_gate), fit.T, delta)]
    best, pair = -np.inf, None
    for a in range(len(gated)):
        for b in range(a + 1, len(gated)):
            i, j = gated[a], gated[b]
            if fit.components[i].kind != fit.components[j].kind:
                continue
            ip = float(np.dot(fit.components[i].pi_bar, fit.components[j].pi_bar))
            if ip > best:
                best, pair = ip, (i, j)
    if pair is None or best < beta:
        return None
    return pair


def merge_duplicates(fit: MichFit, y, beta: float | None = None, alpha_gate: float = 0.9,
                     delta: float | None = None) -> MichFit:
    """Remove components that describe the same change and refit.

    Candidates are components whose ``alpha_gate``-level credible set passes
    the detection rule.  While some same-class pair has location inner
    product at least ``beta`` (default ``(ln T)^(1+delta) / T^2``), the member
    with the smaller peak probability is dropped and the model is refitted
    from the reduced fit.
    """
    delta = fit.config.delta if delta is None else delta
    if beta is None:
        beta = detection_threshold(fit.T, delta) / fit.T ** 2
    while True:
        pair = _duplicate_pair(fit, beta, alpha_gate, delta)
        if pair is None:
            break
        i, j = pair
        drop = j if fit.components[i].pi_bar.max() >= fit.components[j].pi_bar.max() else i
        reduced = _drop_component(fit, drop)
        refit = _fit_once(y, reduced.config, init=reduced)
        diag = dict(refit.diagnostics)
        diag["merges"] = fit.diagnostics.get("merges", 0) + 1
        fit = dataclasses.replace(refit, diagnostics=diag)
    return fit


# ---------------------------------------------------------------------------
# automatic selection
# ---------------------------------------------------------------------------


def _normalize_classes(classes, model: str) -> tuple[str, ...]:
    if isinstance(classes, str):
        classes = [c for c in classes if c.isalpha()]
    out = []
    for c in classes:
        c = c.upper()
        if c not in ("L", "K", "J"):
            raise DomainError(f"unknown component class {c!r}; use L, K or J")
        if model != "gaussian" and c != "L":
            raise DomainError(f"the {model} model only has L components")
        if c not in out:
            out.append(c)
    if not out:
        raise DomainError("select at least one component class")
    return tuple(out)


def auto_select(y, cfg: MichConfig, classes=("J",), Lambda=None) -> MichFit:
    """Grow the component counts one at a time while the ELBO improves.

    Starting from the model with no components, every selected class is
    incremented in turn with a warm start (the new component starts null)
    and the candidate with the largest ELBO is kept.  The search runs
    ``ceil(ln T)`` steps past the best ELBO seen.  Whenever the ELBO falls, a
    fit started from scratch at the same counts is also tried.  The best fit
    overall is returned.
    """
    classes = _normalize_classes(classes, cfg.model)
    if cfg.model == "multivariate-mean" and Lambda is None:
        Lambda = estimate_precision(np.asarray(y, dtype=float).reshape(len(y), -1))
    base = cfg.with_counts(0, 0, 0)
    current = fit_model(y, base, Lambda=Lambda)
    T = current.T
    patience = max(1, math.ceil(math.log(T))) if T > 1 else 1
    best = current
    since_best = 0
    while since_best < patience and current.config.N < T:
        candidates = []
        for letter in classes:
            c = current.config.with_counts(**{letter: getattr(current.config, letter) + 1})
            candidates.append(fit_model(y, c, init=current, Lambda=Lambda))
        nxt = max(candidates, key=lambda f: f.elbo)
        if nxt.elbo < current.elbo:
            cold = fit_model(y, nxt.config, Lambda=Lambda)
            if cold.elbo > nxt.elbo:
                nxt = cold
        current = nxt
        if current.elbo > best.elbo:
            best, since_best = current, 0
        else:
            since_best += 1
    return best


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


def detect_changes(y, cfg: MichConfig, auto: bool = False, classes=("J",),
                   Lambda=None) -> tuple[MichFit, ChangeReport]:
    """Fit, merge duplicates and summarize.

    With ``auto`` the counts are chosen by :func:`auto_select`; otherwise
    ``cfg.L``, ``cfg.K`` and ``cfg.J`` are used.  After a merge with fixed
    counts, the removed components are re-added as null components and the
    model refitted once, followed by one more merge pass.
    """
    if cfg.model == "multivariate-mean" and Lambda is None:
        Lambda = estimate_precision(np.asarray(y, dtype=float).reshape(len(y), -1))
    if auto:
        fit = auto_select(y, cfg, classes, Lambda=Lambda)
    else:
        fit = fit_model(y, cfg, Lambda=Lambda)
    if cfg.merge and fit.config.N > 1:
        merged = merge_duplicates(fit, y)
        if not auto and merged.config.N < fit.config.N:
            restored = _fit_once(y, fit.config, init=merged, Lambda=Lambda)
            merged = merge_duplicates(restored, y)
        fit = merged
    return fit, summarize(fit)

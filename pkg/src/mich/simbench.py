"""Simulation designs, evaluation metrics and a replicated benchmark runner.

Change locations in this module are 1-based times ``t`` in ``1..T``; a
change at ``tau`` means ``y_tau`` is the first observation of the new
segment.  Metrics augment both location sets with the endpoints ``1`` and
``T + 1``.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import MichConfig
from .errors import DomainError, MichError
from .postprocess import ChangeReport, detect_changes

__all__ = [
    "NOISE_FAMILIES",
    "SimulationSpec",
    "GroundTruth",
    "MetricsRow",
    "BenchResult",
    "draw_locations",
    "standardized_noise",
    "generate_sim1",
    "sim1_levels",
    "generate_sim2",
    "hausdorff",
    "fpsle_fnsle",
    "ccd_window",
    "ccd_update",
    "evaluate",
    "run_replicate",
    "run_bench",
    "max_workers",
]

NOISE_FAMILIES = ("gaussian", "student", "laplace", "ma2")


@dataclass(frozen=True)
class SimulationSpec:
    """Parameters of a simulation design.

    ``J`` is the true number of changes.  ``d``, ``p``, ``rho`` and
    ``vanishing`` only affect the multivariate design.  ``nu`` is the
    Student-t degrees of freedom and ``theta`` the MA(2) coefficient.
    """

    T: int = 100
    J: int = 2
    min_space: int = 15
    C: float = math.sqrt(200.0)
    d: int = 1
    p: float = 1.0
    noise: str = "gaussian"
    nu: float = 4.0
    theta: float = 0.5
    rho: float = 0.0
    vanishing: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise DomainError("T must be an integer >= 2")
        if int(self.J) != self.J or self.J < 0:
            raise DomainError("J must be a nonnegative integer")
        if int(self.min_space) != self.min_space or self.min_space < 1:
            raise DomainError("min_space must be a positive integer")
        if (self.J + 1) * self.min_space > self.T:
            raise DomainError(
                f"no placement of {self.J} changes with spacing {self.min_space} fits in T={self.T}")
        if self.noise not in NOISE_FAMILIES:
            raise DomainError(f"noise must be one of {NOISE_FAMILIES}")
        if self.noise == "student" and not self.nu > 2:
            raise DomainError("Student-t noise needs nu > 2 for a finite variance")
        if not 0 < self.p <= 1:
            raise DomainError("p must lie in (0, 1]")
        if not -1 < self.rho < 1:
            raise DomainError("rho must lie in (-1, 1)")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("d must be a positive integer")


@dataclass(frozen=True)
class GroundTruth:
    tau: tuple
    mu_segments: np.ndarray
    sigma_segments: np.ndarray


@dataclass
class MetricsRow:
    bias: float = 0.0
    hausdorff: float = 0.0
    fpsle: float = 0.0
    fnsle: float = 0.0
    ci_len: float = float("nan")
    ccd_num: int = 0
    ccd_den: int = 0
    time_s: float = 0.0
    failed: bool = False
    error: str = ""

    @property
    def ccd(self) -> float:
        return self.ccd_num / self.ccd_den if self.ccd_den else float("nan")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def draw_locations(rng: np.random.Generator, T: int, J: int, min_space: int,
                   max_tries: int = 10_000) -> np.ndarray:
    """Uniform change locations in ``2..T`` with every gap (endpoints included) at least ``min_space``.

    Rejection sampling is tried first; after ``max_tries`` failures a direct
    construction spreads the spare length over the ``J + 1`` gaps.
    """
    if J == 0:
        return np.zeros(0, dtype=int)
    if (J + 1) * min_space > T:
        raise DomainError("infeasible spacing")
    for _ in range(max_tries):
        tau = np.sort(rng.choice(np.arange(2, T + 1), size=J, replace=False))
        gaps = np.diff(np.concatenate([[1], tau, [T + 1]]))
        if gaps.min() >= min_space:
            return tau
    slack = T - (J + 1) * min_space
    bars = np.sort(rng.choice(slack + J, size=J, replace=False))
    extra = np.diff(np.concatenate([[-1], bars, [slack + J]])) - 1
    gaps = min_space + extra
    return 1 + np.cumsum(gaps[:-1])


def standardized_noise(rng: np.random.Generator, n: int, spec: SimulationSpec,
                       size: tuple | None = None) -> np.ndarray:
    """Zero-mean, unit-variance noise of the requested family."""
    shape = (n,) if size is None else (n, *size)
    if spec.noise == "gaussian":
        return rng.standard_normal(shape)
    if spec.noise == "student":
        return rng.standard_t(spec.nu, shape) / math.sqrt(spec.nu / (spec.nu - 2.0))
    if spec.noise == "laplace":
        return rng.laplace(0.0, 1.0, shape) / math.sqrt(2.0)
    th = spec.theta
    eps = rng.standard_normal((n + 2, *shape[1:]))
    e = eps[2:] + th * eps[1:-1] + th * th * eps[:-2]
    return e / math.sqrt(1.0 + th ** 2 + th ** 4)


def _segment_index(T: int, tau: np.ndarray) -> np.ndarray:
    """Segment number (0..J) of every time ``t = 1..T``."""
    return np.searchsorted(tau, np.arange(1, T + 1), side="right")


def sim1_levels(bounds, s, xi, C: float) -> np.ndarray:
    """Segment means for the univariate design.

    ``bounds`` holds ``1, tau_1..tau_J, T + 1``; ``s`` the segment standard
    deviations and ``xi`` the 0/1 jump directions.  Each jump is ``C``
    divided by the smaller of the two adjacent ``sqrt(length) / s`` values.
    """
    J = len(bounds) - 2
    mu = np.zeros(J + 1)
    for j in range(1, J + 1):
        after = math.sqrt(bounds[j + 1] - bounds[j]) / s[j]
        before = math.sqrt(bounds[j] - bounds[j - 1]) / s[j - 1]
        mu[j] = mu[j - 1] + (1 - 2 * xi[j - 1]) * C / min(after, before)
    return mu


def generate_sim1(spec: SimulationSpec, rng: np.random.Generator | None = None):
    """Univariate series with joint mean and variance changes.

    Segment ``j`` has standard deviation ``s_j = 2^U_j`` (``s_0 = 1``) and the
    mean jumps are scaled so that every change is similarly hard to find.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    T, J = spec.T, spec.J
    tau = draw_locations(rng, T, J, spec.min_space)
    bounds = np.concatenate([[1], tau, [T + 1]])
    s = np.ones(J + 1)
    xi = np.zeros(J, dtype=int)
    if J:
        s[1:] = 2.0 ** rng.uniform(-2.0, 2.0, J)
        xi = rng.integers(0, 2, J)
    mu = sim1_levels(bounds, s, xi, spec.C)
    e = standardized_noise(rng, T, spec)
    seg = _segment_index(T, tau)
    y = mu[seg] + s[seg] * e
    return y, GroundTruth(tuple(int(t) for t in tau), mu, s)


def generate_sim2(spec: SimulationSpec, rng: np.random.Generator | None = None):
    """Multivariate series with mean changes in a random subset of coordinates.

    Coordinate ``i`` has standard deviation ``s_i = 2^U_i``; with ``rho``
    nonzero the noise has correlation ``rho^|i - j|``.  ``floor(p d)``
    coordinates jump at every change; with ``vanishing`` the jumps shrink
    by ``sqrt(floor(p d))``.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    T, L, d = spec.T, spec.J, spec.d
    tau = draw_locations(rng, T, L, spec.min_space)
    bounds = np.concatenate([[1], tau, [T + 1]])
    s = 2.0 ** rng.uniform(-2.0, 2.0, d)
    d0 = int(math.floor(spec.p * d))
    active = np.zeros(d, dtype=bool)
    active[rng.choice(d, size=d0, replace=False)] = True
    mu = np.zeros((L + 1, d))
    for ell in range(1, L + 1):
        xi = rng.integers(0, 2, d)
        gap = min(bounds[ell + 1] - bounds[ell], bounds[ell] - bounds[ell - 1])
        scale = math.sqrt(gap * (d0 if spec.vanishing and d0 > 0 else 1))
        mu[ell] = mu[ell - 1] + spec.C * (1 - 2 * xi) * s * active / scale
    e = standardized_noise(rng, T, spec, size=(d,))
    if spec.rho != 0.0:
        idx = np.arange(d)
        corr = spec.rho ** np.abs(idx[:, None] - idx[None, :])
        e = e @ np.linalg.cholesky(corr).T
    seg = _segment_index(T, tau)
    y = mu[seg] + e * s
    return y, GroundTruth(tuple(int(t) for t in tau), mu, s)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _augment(tau, T: int) -> np.ndarray:
    inner = sorted(int(t) for t in tau)
    return np.array([1] + inner + [T + 1], dtype=float)


def hausdorff(tau_hat, tau, T: int) -> float:
    """Sum of the two directed max-min distances between the augmented sets."""
    a, b = _augment(tau_hat, T), _augment(tau, T)
    dist = np.abs(a[:, None] - b[None, :])
    return float(dist.min(axis=0).max() + dist.min(axis=1).max())


def _fpsle(tau_hat, tau, T: int) -> float:
    est, true = _augment(tau_hat, T), _augment(tau, T)
    total = 0.0
    for j in range(1, est.size):
        mid = 0.5 * (est[j - 1] + est[j])
        i = int(np.searchsorted(true, mid, side="left"))
        i = min(max(i, 1), true.size - 1)
        total += abs(est[j - 1] - true[i - 1]) + abs(est[j] - true[i])
    return total / (2.0 * (est.size - 1))


def fpsle_fnsle(tau_hat, tau, T: int) -> tuple[float, float]:
    """False-positive and false-negative sensitive location errors.

    Each estimated segment is matched to the true segment containing its
    midpoint; the error averages the distances between matched endpoints.
    The false-negative version swaps the roles of the two sets.
    """
    return _fpsle(tau_hat, tau, T), _fpsle(tau, tau_hat, T)


def ccd_window(T: int) -> float:
    return min(math.sqrt(T) / 2.0, 15.0)


def ccd_update(row: MetricsRow, tau, report: ChangeReport, T: int) -> MetricsRow:
    """Add coverage-conditional-on-detection counts for one replicate.

    A true change counts toward the denominator when some detected change
    lies within the window, and toward the numerator when one of those
    in-window detections has the true change in its credible set.
    """
    w = ccd_window(T)
    detected = [(c.map_index + 1, {i + 1 for i in c.credible_set.indices})
                for c in report.components if c.detected]
    for t in tau:
        near = [cs for m, cs in detected if abs(m - t) <= w]
        if near:
            row.ccd_den += 1
            if any(t in cs for cs in near):
                row.ccd_num += 1
    return row


def evaluate(report: ChangeReport, truth: GroundTruth, T: int, runtime: float = 0.0) -> MetricsRow:
    """All metrics for one fitted replicate."""
    tau = truth.tau
    tau_hat = [m + 1 for m in report.detected_locations()]
    n_hat = report.N_hat
    fp, fn = fpsle_fnsle(tau_hat, tau, T)
    lengths = [len(c.credible_set) for c in report.components if c.detected]
    row = MetricsRow(
        bias=float(abs(len(tau) - n_hat)),
        hausdorff=hausdorff(tau_hat, tau, T),
        fpsle=fp,
        fnsle=fn,
        ci_len=float(np.mean(lengths)) if lengths else float("nan"),
        time_s=runtime,
    )
    return ccd_update(row, tau, report, T)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


@dataclass
class BenchResult:
    rows: list
    spec: SimulationSpec
    config: MichConfig
    auto: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.rows)

    def summary(self) -> dict:
        ok = [r for r in self.rows if not r.failed]

        def mean(attr):
            vals = np.array([getattr(r, attr) for r in ok], dtype=float)
            vals = vals[np.isfinite(vals)]
            return float(vals.mean()) if vals.size else float("nan")

        num = sum(r.ccd_num for r in ok)
        den = sum(r.ccd_den for r in ok)
        return {
            "bias": mean("bias"),
            "hausdorff": mean("hausdorff"),
            "fpsle": mean("fpsle"),
            "fnsle": mean("fnsle"),
            "ci_len": mean("ci_len"),
            "ccd": num / den if den else float("nan"),
            "time_s": mean("time_s"),
        }


def replicate_seed(master: int, r: int) -> int:
    return int(master) ^ int(r)


def run_replicate(spec: SimulationSpec, cfg: MichConfig, r: int, auto: bool = False,
                  classes=("J",)) -> MetricsRow:
    """Generate, fit and score replicate ``r`` (seeded by ``spec.seed XOR r``)."""
    rng = np.random.default_rng(replicate_seed(spec.seed, r))
    try:
        if cfg.model == "multivariate-mean":
            y, truth = generate_sim2(spec, rng)
        else:
            y, truth = generate_sim1(spec, rng)
        start = time.perf_counter()
        _, report = detect_changes(y, cfg, auto=auto, classes=classes)
        elapsed = time.perf_counter() - start
        return evaluate(report, truth, spec.T, elapsed)
    except (MichError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return MetricsRow(failed=True, error=f"{type(exc).__name__}: {exc}")


def max_workers() -> int:
    """Worker count for parallel replicates, capped by ``MICH_THREADS`` when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get("MICH_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _run_one(args):
    return run_replicate(*args)


def run_bench(spec: SimulationSpec, cfg: MichConfig, replicates: int, auto: bool = False,
              classes=("J",), workers: int | None = None) -> BenchResult:
    """Run independent replicates, in parallel processes when more than one worker is available."""
    if replicates < 1:
        raise DomainError("replicates must be at least 1")
    workers = max_workers() if workers is None else max(1, workers)
    jobs = [(spec, cfg, r, auto, classes) for r in range(replicates)]
    if workers == 1 or replicates == 1:
        rows = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, replicates)) as pool:
            rows = list(pool.map(_run_one, jobs, chunksize=max(1, replicates // (4 * workers))))
    return BenchResult(rows, spec, cfg, auto)


def oracle_config(spec: SimulationSpec, **overrides) -> MichConfig:
    """Configuration with the true number of components for a design."""
    if spec.d > 1:
        base = MichConfig(L=spec.J, model="multivariate-mean")
    else:
        base = MichConfig(J=spec.J)
    return dataclasses.replace(base, **overrides)

"""Continuous ski rental with a prediction of the season length.

An algorithm ``A_T`` rents until time ``T`` and then buys at cost ``b``.
Among the ``r``-robust thresholds ``T in [b/(r-1), b(r-1)]`` we pick the one
minimizing the weighted maximum or average distance to the ideal
``r``-robust performance curve, or the conditional value-at-risk of the
cost under a distributional prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DistributionalPrediction, PredictionRange, WeightFunction, minimize_scalar

_ROBUST_TOL = 1e-9


@dataclass(frozen=True)
class SkiInstance:
    """Buy cost ``b`` and robustness target ``r``."""

    b: float = 10.0
    r: float = 5.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"buy cost b must be positive, got {self.b}")
        if self.r < 2:
            raise ValueError(f"robustness r must be >= 2, got {self.r}")

    @property
    def robust_range(self) -> tuple[float, float]:
        return robust_range(self.r, self.b)

    @property
    def ideal_knee(self) -> float:
        """End of the rising branch of the ideal curve."""
        return min(self.b * self.r / (self.r - 1.0), self.b * (self.r - 1.0))


@dataclass(frozen=True)
class SkiPolicy:
    """Buy threshold ``T``; ``value`` holds the objective it achieved, if known."""

    threshold: float
    value: float | None = None


def cost(T, x, b: float):
    """Cost of renting until ``T`` then buying, when the season lasts ``x``."""
    T = np.asarray(T, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.where(x < T, x, T + b)
    return float(out) if out.ndim == 0 else out


def perf_ratio(T, x, b: float):
    """``cost(T, x) / min(x, b)``; equals 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    opt = np.minimum(x, b)
    c = np.asarray(cost(T, x, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(opt > 0, c / np.where(opt > 0, opt, 1.0), 1.0)
    return float(out) if out.ndim == 0 else out


def robust_range(r: float, b: float) -> tuple[float, float]:
    """Interval of ``r``-robust buy thresholds."""
    if r < 2:
        raise ValueError(f"robustness r must be >= 2, got {r}")
    return b / (r - 1.0), b * (r - 1.0)


def ideal_pr(r: float, b: float, x):
    """Performance ratio of the ideal ``r``-robust algorithm at horizon ``x``.

    For ``r < (3 + sqrt 5)/2`` the curve jumps at ``b(r-1)``; the value there
    is ``r/(r-1)`` since no robust threshold rents past ``b(r-1)``.
    """
    x = np.asarray(x, dtype=float)
    knee = min(b * r / (r - 1.0), b * (r - 1.0))
    out = np.where(x < b, 1.0, np.where(x < knee, x / b, r / (r - 1.0)))
    return float(out) if out.ndim == 0 else out


def _check_robust(T: float, inst: SkiInstance) -> None:
    lo, hi = inst.robust_range
    if not (lo - _ROBUST_TOL * lo <= T <= hi + _ROBUST_TOL * hi):
        raise ValueError(f"threshold T={T} is not {inst.r}-robust; need T in [{lo}, {hi}]")


def _distance_pieces(T: float, inst: SkiInstance, lo: float, hi: float, extra=()):
    """Split ``[lo, hi]`` into pieces where ``pr - ideal = p + q x + s/x``.

    Yields ``(a, c, p, q, s)``.
    """
    b, r = inst.b, inst.r
    knee = inst.ideal_knee
    cuts = sorted({lo, hi, *(t for t in (T, b, knee, *extra) if lo < t < hi)})
    rr = r / (r - 1.0)
    for a, c in zip(cuts[:-1], cuts[1:]):
        m = 0.5 * (a + c) if math.isfinite(c) else a + 1.0
        const_ideal = m > knee
        if m < T:
            if m < b or not const_ideal:
                yield a, c, 0.0, 0.0, 0.0
            else:
                yield a, c, -rr, 1.0 / b, 0.0
        elif m < b:
            yield a, c, -1.0, 0.0, T + b
        elif const_ideal:
            yield a, c, (T + b) / b - rr, 0.0, 0.0
        else:
            yield a, c, (T + b) / b, -1.0 / b, 0.0


def _resolve(w: WeightFunction | None, rng: PredictionRange | None) -> tuple[WeightFunction, PredictionRange]:
    if w is None and rng is None:
        raise ValueError("need a weight function or a prediction range")
    if w is None:
        w = WeightFunction("uniform", rng)
    return w, w.range if rng is None else rng


def d_max(T: float, inst: SkiInstance, w: WeightFunction | None = None, rng: PredictionRange | None = None) -> float:
    """Weighted maximum distance of ``A_T`` from the ideal curve over the range.

    The supremum is exact: each smooth piece contributes its endpoint
    limits and interior stationary points.  Unbounded ranges are only
    allowed with uniform weights.
    """
    _check_robust(T, inst)
    w, rng = _resolve(w, rng)
    if not rng.bounded and w.family != "uniform":
        raise ValueError("unbounded prediction ranges require uniform weights")
    best = 0.0
    for a, c, p, q, s in _distance_pieces(T, inst, rng.lower, rng.upper, extra=(w.peak,)):
        if p == q == s == 0.0:
            continue
        best = max(best, w.piece_sup(p, q, s, a, c))
    return best


def d_avg(T: float, inst: SkiInstance, w: WeightFunction | None = None, rng: PredictionRange | None = None) -> float:
    """Weighted average distance ``(1/|R|) int_R (pr - ideal) w``.

    A zero-width range returns the pointwise distance at its single point.
    """
    _check_robust(T, inst)
    w, rng = _resolve(w, rng)
    if not rng.bounded:
        raise ValueError("average distance needs a bounded prediction range")
    if rng.width == 0.0:
        x = rng.lower
        return float((perf_ratio(T, x, inst.b) - ideal_pr(inst.r, inst.b, x)) * w(x))
    total = 0.0
    for a, c, p, q, s in _distance_pieces(T, inst, rng.lower, rng.upper, extra=(w.peak,)):
        if p == q == s == 0.0:
            continue
        total += w.piece_integral(p, q, s, a, c)
    return total / rng.width


def _candidates(inst: SkiInstance, rng: PredictionRange, w: WeightFunction) -> list[float]:
    b, r = inst.b, inst.r
    lo, hi = inst.robust_range
    pts = [lo, hi, b, b * r / (r - 1.0), b * (r - 1.0), w.peak, rng.lower, rng.upper]
    return [t for t in pts if math.isfinite(t) and lo <= t <= hi]


def _prefer_b(best: tuple[float, float], f, inst: SkiInstance) -> tuple[float, float]:
    """Return ``T = b`` if it ties with the best value found."""
    fb = f(inst.b)
    if fb <= best[1] + 1e-12 * max(1.0, abs(best[1])):
        return inst.b, fb
    return best


def optimize_T_max(
    inst: SkiInstance,
    w: WeightFunction | None = None,
    rng: PredictionRange | None = None,
    grid: int = 4096,
) -> SkiPolicy:
    """Robust threshold minimizing the weighted maximum distance.

    Candidates are split into the classes ``T < b`` and ``T >= b``.  Each
    class is searched over its critical points (``y``, ``b``, ``br/(r-1)``,
    ``b(r-1)``, range endpoints) plus a dense scan refined by golden
    section; the overall minimizer is returned, ties going to ``T = b``.
    """
    w, rng = _resolve(w, rng)
    lo, hi = inst.robust_range
    f = lambda t: d_max(float(min(max(t, lo), hi)), inst, w, rng)
    cands = _candidates(inst, rng, w)
    results = []
    if lo < inst.b:
        results.append(minimize_scalar(f, lo, np.nextafter(inst.b, lo), grid=grid // 2, candidates=cands))
    results.append(minimize_scalar(f, max(lo, inst.b), hi, grid=grid // 2, candidates=cands))
    best = min(results, key=lambda t: t[1])
    if lo <= inst.b <= hi:
        best = _prefer_b(best, f, inst)
    return SkiPolicy(best[0], best[1])


def optimize_T_avg(
    inst: SkiInstance,
    w: WeightFunction | None = None,
    rng: PredictionRange | None = None,
    grid: int = 4096,
) -> SkiPolicy:
    """Robust threshold minimizing the weighted average distance (ties go to ``T = b``)."""
    w, rng = _resolve(w, rng)
    lo, hi = inst.robust_range
    f = lambda t: d_avg(float(min(max(t, lo), hi)), inst, w, rng)
    best = minimize_scalar(f, lo, hi, grid=grid, candidates=_candidates(inst, rng, w))
    if lo <= inst.b <= hi:
        best = _prefer_b(best, f, inst)
    return SkiPolicy(best[0], best[1])


def cvar_cost(T, mu: DistributionalPrediction, alpha: float, b: float):
    """Conditional value-at-risk of the cost of ``A_T`` for ``x ~ mu``.

    The tail expectation is the minimum of three expressions: the exact
    tail average when ``T`` lies above the ``alpha``-quantile ``t*``, the
    bound ``T + b q_T/(1-alpha)``, and the worst cost ``T + b``, with
    ``q_T = P(x >= T)``.  Vectorized over ``T``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    T = np.asarray(T, dtype=float)
    t_star = mu.lower if alpha == 0.0 else mu._ppf(alpha)
    q = 1.0 - np.asarray(mu.cdf(T))
    if mu.degenerate:
        q = np.where(T <= mu.lower, 1.0, 0.0)
    tail = np.asarray(mu.partial_expectation(t_star, np.minimum(T, mu.upper)))
    if mu.degenerate:
        tail = np.where(T > mu.lower, mu.lower * (1.0 - alpha), 0.0)
    term1 = (tail + (T + b) * q) / (1.0 - alpha)
    term2 = T + b * q / (1.0 - alpha)
    term3 = T + b
    out = np.minimum(np.minimum(term1, term2), term3)
    return float(out) if out.ndim == 0 else out


def cvar_cost_limit(T: float, mu: DistributionalPrediction, b: float) -> float:
    """Limit of :func:`cvar_cost` as ``alpha -> 1``.

    ``T + b`` when the season reaches ``T`` with positive probability,
    otherwise the support's upper end.
    """
    q = 1.0 - float(mu.cdf(T)) if T > mu.lower else 1.0
    return T + b if q > 0 else mu.upper


def optimize_T_cvar(inst: SkiInstance, mu: DistributionalPrediction, alpha: float, grid: int = 4096) -> SkiPolicy:
    """Robust threshold minimizing the CVaR of the cost; ties go to the largest ``T``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    lo, hi = inst.robust_range
    f = lambda t: cvar_cost(t, mu, alpha, inst.b)
    cands = [inst.b, mu.lower, mu.upper, mu.center]
    x, v = minimize_scalar(f, lo, hi, grid=grid, candidates=cands, prefer="right", vectorized=True)
    return SkiPolicy(x, v)


def expected_cost(T: float, mu: DistributionalPrediction, b: float) -> float:
    """``E[cost(T, x)]`` for ``x ~ mu``."""
    return float(cvar_cost(T, mu, 0.0, b))


def baseline_bp(y: float, rho: float, inst: SkiInstance, switch: bool = True) -> SkiPolicy:
    """Threshold of the ``BP_rho`` baseline.

    Buys at ``b/(r-1)`` when ``y >= b`` and at ``rho`` otherwise.  With
    ``switch=False`` the threshold is ``rho`` regardless of ``y``.
    """
    b, r = inst.b, inst.r
    if not (b - 1e-12 <= rho <= b * (r - 1.0) + 1e-12):
        raise ValueError(f"rho must lie in [b, b(r-1)] = [{b}, {b * (r - 1.0)}], got {rho}")
    if switch and y >= b:
        return SkiPolicy(b / (r - 1.0))
    return SkiPolicy(float(rho))

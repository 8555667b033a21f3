"""Contract scheduling with doubling schedules.

The schedule ``X_lam`` runs contracts of length ``lam 2^i`` back to back,
contract ``i`` completing at time ``lam 2^(i+1)``.  Every such schedule has
acceleration ratio 4; the ideal ratio is 2.  The parameter ``lam in [1, 2)``
is optimized for weighted maximum and average distance over the range of
a predicted interruption time, and for the CVaR of the completed length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DistributionalPrediction, PredictionRange, WeightFunction, minimize_scalar

IDEAL_RATIO = 2.0


@dataclass(frozen=True)
class Schedule:
    """Doubling schedule parameter ``lam``; ``value`` holds the achieved objective, if known."""

    lam: float
    value: float | None = None

    def __post_init__(self):
        if not 1.0 <= self.lam < 2.0:
            raise ValueError(f"schedule parameter must lie in [1, 2), got {self.lam}")


def normalize_lambda(t: float) -> float:
    """The ``lam in [1, 2)`` whose schedule completes a contract at time ``t``."""
    if not t > 0:
        raise ValueError(f"completion time must be positive, got {t}")
    m, e = math.frexp(t)  # t = m 2^e with m in [0.5, 1)
    return 2.0 * m


def completion_index(lam: float, t: float) -> int:
    """``k = floor(log2(t/lam))`` computed exactly: ``lam 2^k <= t < lam 2^(k+1)``."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    k = math.floor(math.log2(t / lam))
    while lam * 2.0**k > t:
        k -= 1
    while lam * 2.0 ** (k + 1) <= t:
        k += 1
    return k


def largest_completed(lam: float, t: float) -> float:
    """Length of the largest contract completed by time ``t`` (inclusive)."""
    return lam * 2.0 ** (completion_index(lam, t) - 1)


def perf_ratio(lam: float, t: float) -> float:
    """``t / largest_completed(lam, t)``."""
    return t / largest_completed(lam, t)


def perf_ratio_left(lam: float, t: float) -> float:
    """Left limit of :func:`perf_ratio` at ``t`` (4 at completion times)."""
    k = completion_index(lam, t)
    if lam * 2.0**k == t:
        return t / (lam * 2.0 ** (k - 2))
    return t / (lam * 2.0 ** (k - 1))


def _pieces(lam: float, lo: float, hi: float, extra=()):
    """Pieces of ``[lo, hi]`` on which the completed length ``L`` is constant; yields ``(a, c, L)``."""
    k = completion_index(lam, lo)
    cuts = {lo, hi, *(t for t in extra if lo < t < hi)}
    j = k + 1
    while lam * 2.0**j < hi:
        cuts.add(lam * 2.0**j)
        j += 1
    cuts = sorted(cuts)
    for a, c in zip(cuts[:-1], cuts[1:]):
        yield a, c, largest_completed(lam, 0.5 * (a + c))


def _check_lambda(lam: float) -> None:
    if not 1.0 <= lam < 2.0:
        raise ValueError(f"schedule parameter must lie in [1, 2), got {lam}")


def d_max(lam: float, w: WeightFunction, rng: PredictionRange | None = None) -> float:
    """Weighted maximum distance ``sup_{t in R} (t/l(t) - 2) w(t)``.

    Completion times inside the range contribute their left limit (ratio 4).
    """
    _check_lambda(lam)
    rng = w.range if rng is None else rng
    if rng.width == 0.0:
        return (perf_ratio(lam, rng.lower) - IDEAL_RATIO) * float(w(rng.lower))
    best = 0.0
    for a, c, L in _pieces(lam, rng.lower, rng.upper, extra=(w.peak,)):
        best = max(best, w.piece_sup(-IDEAL_RATIO, 1.0 / L, 0.0, a, c))
    return best


def d_avg(lam: float, w: WeightFunction, rng: PredictionRange | None = None) -> float:
    """Weighted average distance ``(1/|R|) int_R (t/l(t) - 2) w(t) dt``."""
    _check_lambda(lam)
    rng = w.range if rng is None else rng
    if rng.width == 0.0:
        return (perf_ratio(lam, rng.lower) - IDEAL_RATIO) * float(w(rng.lower))
    total = 0.0
    for a, c, L in _pieces(lam, rng.lower, rng.upper, extra=(w.peak,)):
        total += w.piece_integral(-IDEAL_RATIO, 1.0 / L, 0.0, a, c)
    return total / rng.width


def _lambda_candidates(rng: PredictionRange, w: WeightFunction | None = None) -> list[float]:
    pts = [rng.lower, rng.upper, rng.center]
    if w is not None:
        pts.append(w.peak)
    return [normalize_lambda(t) for t in pts if t > 0]


def _optimize(f, cands, grid: int, prefer: str = "left") -> tuple[float, float]:
    hi = np.nextafter(2.0, 1.0)
    g = lambda lam: f(min(max(lam, 1.0), hi))
    return minimize_scalar(g, 1.0, hi, grid=grid, candidates=cands, prefer=prefer)


def optimize_lambda_max(w: WeightFunction, rng: PredictionRange | None = None, grid: int = 4096) -> Schedule:
    """Schedule minimizing the weighted maximum distance.

    The scan is augmented with the schedules completing exactly at the
    range endpoints and at the weight's peak.  Ties go to the schedule
    completing at the range's lower end, then to the smallest ``lam``.
    """
    rng = w.range if rng is None else rng
    f = lambda lam: d_max(lam, w, rng)
    x, v = _optimize(f, _lambda_candidates(rng, w), grid)
    if rng.lower > 0:
        lam_lo = normalize_lambda(rng.lower)
        v_lo = f(lam_lo)
        if v_lo <= v + 1e-12 * max(1.0, abs(v)):
            x, v = lam_lo, v_lo
    return Schedule(x, v)


def optimize_lambda_avg(w: WeightFunction, rng: PredictionRange | None = None, grid: int = 4096) -> Schedule:
    """Schedule minimizing the weighted average distance."""
    rng = w.range if rng is None else rng
    if rng.width == 0.0:
        lam = normalize_lambda(rng.lower)
        return Schedule(lam, d_avg(lam, w, rng))
    x, v = _optimize(lambda lam: d_avg(lam, w, rng), _lambda_candidates(rng, w), grid)
    return Schedule(x, v)


def d_avg_linear_closed_form(lam: float, y: float, delta: float) -> float:
    """Closed-form average distance for the linear weight, valid when the
    single completion inside the range falls below ``y`` and ``delta <= 1/3``."""
    k = completion_index(lam, (1.0 - delta) * y)
    h = y * delta
    first = (-3.0 * h * h * lam + 4.0 ** (k + 1) * lam**3 + 3.0 * 2.0**k * lam**2 * y * (delta - 1.0)) / (3.0 * h * h * lam)
    second = 2.0 ** (-2 - k) * (-(h**3) + 9.0 * h * h * y - 3.0 * h * y * y + y**3) / (3.0 * h * h * lam)
    return first + second


def lambda_avg_closed_form(y: float, delta: float, k: int) -> float:
    """Stationary point of :func:`d_avg_linear_closed_form` for a fixed index ``k``.

    ``k`` is the completion index of the range's lower end.  Returns ``nan``
    if the expression is not real.
    """
    h = y * delta
    A = 3 * h**3 - 25 * h * h * y + 9 * h * y * y - 3 * y**3
    B1 = 5 * h**3 - 39 * h * h * y + 15 * h * y * y - 5 * y**3
    B2 = h**3 - 9 * h * h * y + 3 * h * y * y - y**3
    inner = 4096.0**k * B1 * B2
    if inner < 0:
        return math.nan
    core = -3.0 * 64.0**k * A + 4.0 * math.sqrt(inner)
    cube = math.copysign(abs(core) ** (1.0 / 3.0), core)
    if cube == 0:
        return math.nan
    return 2.0 ** (-3 * (1 + k)) * (4.0**k * y * (1 - delta) + 16.0**k * y * y * (delta - 1) ** 2 / cube + cube)


def _check_cvar_args(alpha: float, delta: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if delta > 1.0 / 3.0 + 1e-12:
        raise ValueError(f"CVaR of the completed length requires delta <= 1/3, got {delta}")


def cvar_length(lam: float, mu: DistributionalPrediction, alpha: float, y: float, delta: float) -> float:
    """CVaR of the largest completed length for an interruption ``t ~ mu``.

    With ``k`` the completion index of ``(1-delta)y`` and ``L = lam 2^(k-1)``
    the length completed by then, the value is
    ``max{L (2(1-alpha) - q)/(1-alpha), L}`` where ``q`` is the probability
    of interruption before the next completion ``lam 2^(k+1)``.
    """
    _check_lambda(lam)
    _check_cvar_args(alpha, delta)
    lo = (1.0 - delta) * y
    k = completion_index(lam, lo)
    L = lam * 2.0 ** (k - 1)
    nxt = lam * 2.0 ** (k + 1)
    if mu.degenerate:
        q = 1.0 if lo <= mu.lower < nxt else 0.0
    else:
        q = min(max(float(mu.cdf(nxt)) - float(mu.cdf(lo)), 0.0), 1.0)
    return max(L * (2.0 * (1.0 - alpha) - q) / (1.0 - alpha), L)


def cvar_length_limit(lam: float, y: float, delta: float) -> float:
    """Limit of :func:`cvar_length` as ``alpha -> 1``."""
    return largest_completed(lam, (1.0 - delta) * y)


def expected_length(lam: float, mu: DistributionalPrediction) -> float:
    """``E[l(X_lam, t)]`` for ``t ~ mu``."""
    if mu.degenerate:
        return largest_completed(lam, mu.lower)
    total = 0.0
    for a, c, L in _pieces(lam, mu.lower, mu.upper):
        total += L * (float(mu.cdf(c)) - float(mu.cdf(a)))
    return total


def optimize_lambda_cvar(
    mu: DistributionalPrediction, alpha: float, y: float, delta: float, grid: int = 4096
) -> Schedule:
    """Schedule maximizing the CVaR of the completed length (ties to the smallest ``lam``).

    The objective jumps where a completion time crosses the support or the
    range's lower end, so those schedules are added to the scan.  A
    point-mass prediction returns the schedule completing at ``y``.
    """
    _check_cvar_args(alpha, delta)
    if delta == 0.0 or mu.degenerate:
        lam = normalize_lambda(y)
        return Schedule(lam, cvar_length(lam, mu, alpha, y, delta))
    lo = (1.0 - delta) * y
    cands = [normalize_lambda(t) for t in (lo, mu.lower, mu.upper, y)]
    cands += [np.nextafter(c, 1.0) for c in cands if c > 1.0]
    x, v = _optimize(lambda lam: -cvar_length(lam, mu, alpha, y, delta), cands, grid)
    return Schedule(x, -v)


def baseline_schedule(kind: str, y: float, delta: float = 0.0) -> Schedule:
    """Prediction-based baselines: ``"po"`` completes a contract at ``y``,
    ``"delta_tol"`` at ``(1-delta)y``."""
    kinds = {"po": y, "delta_tol": (1.0 - delta) * y}
    if kind not in kinds:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {sorted(kinds)}")
    target = kinds[kind]
    if not target > 0:
        raise ValueError(f"baseline completion target must be positive, got {target}")
    return Schedule(normalize_lambda(target))

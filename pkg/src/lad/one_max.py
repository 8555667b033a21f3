"""One-max search with a prediction of the maximum price.

Prices lie in ``[1, M]``.  The threshold algorithm ``A_T`` sells at the
first price at least ``T``; it is ``r``-robust iff ``T in [M/r, r]``.
Thresholds are optimized for weighted maximum distance, average distance,
and the CVaR of the profit under the worst-case input distribution in
which prices climb to a maximum ``x ~ mu`` and then crash to 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .numerics import DistributionalPrediction, PredictionRange, WeightFunction, find_roots, minimize_scalar


@dataclass(frozen=True)
class OneMaxInstance:
    """Price bound ``M`` and robustness target ``r`` (``sqrt(M) <= r``)."""

    M: float = 1000.0
    r: float = 100.0

    def __post_init__(self):
        if not self.M > 1:
            raise ValueError(f"price bound M must exceed 1, got {self.M}")
        if self.r < math.sqrt(self.M) * (1 - 1e-12):
            raise ValueError(f"robustness r={self.r} is below sqrt(M)={math.sqrt(self.M)}")

    @property
    def t1(self) -> float:
        # M/r can round one ulp above r when r = sqrt(M)
        return min(self.M / self.r, self.r)

    @property
    def t2(self) -> float:
        return self.r


@dataclass(frozen=True)
class OneMaxPolicy:
    """Reservation price ``T``; ``value`` holds the achieved objective, if known."""

    threshold: float
    value: float | None = None


@dataclass(frozen=True)
class PriceSeries:
    """Immutable, nonempty sequence of prices."""

    prices: tuple[float, ...]

    def __post_init__(self):
        if len(self.prices) == 0:
            raise ValueError("price series is empty")
        if any(not (p > 0) or not math.isfinite(p) for p in self.prices):
            raise ValueError("prices must be positive and finite")

    @classmethod
    def of(cls, prices: Sequence[float]) -> PriceSeries:
        return cls(tuple(float(p) for p in prices))

    @property
    def max_price(self) -> float:
        return max(self.prices)

    @property
    def min_price(self) -> float:
        return min(self.prices)


def run_threshold(T: float, prices: PriceSeries | Sequence[float], mode: str = "synthetic") -> float:
    """Price accepted by ``A_T`` on a price sequence.

    If no price reaches ``T`` the algorithm is forced to sell at the
    fallback price: 1 in ``"synthetic"`` mode, the series minimum in
    ``"real"`` mode.
    """
    if not isinstance(prices, PriceSeries):
        prices = PriceSeries.of(prices)
    if mode not in ("synthetic", "real"):
        raise ValueError(f"mode must be 'synthetic' or 'real', got {mode!r}")
    arr = np.asarray(prices.prices)
    hit = np.flatnonzero(arr >= T)
    if hit.size:
        return float(arr[hit[0]])
    return 1.0 if mode == "synthetic" else float(arr.min())


def worst_case_profit(T, x):
    """Profit of ``A_T`` on prices rising to ``x`` then dropping to 1."""
    T = np.asarray(T, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.where(x >= T, T, 1.0)
    return float(out) if out.ndim == 0 else out


def perf_ratio(T, x):
    """``x / profit`` on the worst-case sequence with maximum ``x``."""
    out = np.asarray(x, dtype=float) / np.asarray(worst_case_profit(T, x))
    return float(out) if out.ndim == 0 else out


def ideal_pr(inst: OneMaxInstance, x):
    """Performance ratio of the ideal ``r``-robust algorithm at maximum price ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 1 - 1e-12) | (x > inst.M * (1 + 1e-12))):
        raise ValueError(f"maximum price must lie in [1, M={inst.M}]")
    out = np.where(x < inst.t1, x, np.where(x <= inst.t2, 1.0, x / inst.t2))
    return float(out) if out.ndim == 0 else out


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")


def _distance_pieces(T: float, inst: OneMaxInstance, lo: float, hi: float, extra=()):
    """Pieces of ``[lo, hi]`` on which ``pr - ideal = p + q x``; yields ``(a, c, p, q)``."""
    t1, t2 = inst.t1, inst.t2
    cuts = sorted({lo, hi, *(t for t in (T, t1, t2, *extra) if lo < t < hi)})
    for a, c in zip(cuts[:-1], cuts[1:]):
        m = 0.5 * (a + c)
        if m < T:  # profit 1, ratio x
            if m < t1:
                yield a, c, 0.0, 0.0
            elif m <= t2:
                yield a, c, -1.0, 1.0
            else:
                yield a, c, 0.0, 1.0 - 1.0 / t2
        elif m < t1:
            yield a, c, 0.0, 1.0 / T - 1.0
        elif m <= t2:
            yield a, c, -1.0, 1.0 / T
        else:
            yield a, c, 0.0, 1.0 / T - 1.0 / t2


def _weight(w: WeightFunction | None, y: float, delta: float) -> WeightFunction:
    return WeightFunction.build("uniform", y, delta) if w is None else w


def d_max(T: float, inst: OneMaxInstance, w: WeightFunction | None, y: float, delta: float) -> float:
    """Weighted maximum distance of ``A_T`` from the ideal curve on ``R_y``.

    Uses the true performance ratio on worst-case sequences, so maxima
    below ``t1`` (where both curves equal ``x``) contribute nothing.
    """
    _check_delta(delta)
    w = _weight(w, y, delta)
    rng = PredictionRange.from_prediction(y, delta)
    if rng.width == 0.0:
        return float((perf_ratio(T, y) - ideal_pr(inst, y)) * w(y))
    best = 0.0
    for a, c, p, q in _distance_pieces(T, inst, rng.lower, rng.upper, extra=(w.peak,)):
        if p == q == 0.0:
            continue
        best = max(best, w.piece_sup(p, q, 0.0, a, c))
    return best


def game_payoff(T: float, x: float, inst: OneMaxInstance, w: WeightFunction | Callable[[float], float], y=None, delta=None) -> float:
    """Weighted distance the adversary obtains by choosing maximum ``x`` against ``A_T``.

    For ``x < T`` the adversary plays the limit price ``T^-`` so the
    payoff is ``(T - 1) w(x)``.
    """
    wx = float(w(x))
    if x < T:
        return (T - 1.0) * wx
    if x <= inst.t2:
        return (x / T - 1.0) * wx
    return (x / T - x / inst.t2) * wx


def optimize_T_max_unweighted(inst: OneMaxInstance, y: float, delta: float) -> OneMaxPolicy:
    """Threshold minimizing the maximum distance under uniform weights.

    With ``U = (1+delta)y`` the distance is the larger of the loss ``T - 1``
    from maxima just below ``T`` (absent when ``T <= max((1-delta)y, t1)``)
    and the loss ``U/T - ideal(U)`` at the top of the range.  The optimum is
    one of: the balancing point ``sqrt(U)`` (when ``U <= t2``), the
    balancing root ``((t2-U) + sqrt((t2-U)^2 + 4 t2^2 U)) / (2 t2)`` (when
    ``U > t2``), or the largest threshold that avoids the first loss,
    ``(1-delta)y``; all clamped to ``[t1, t2]``.
    """
    _check_delta(delta)
    t1, t2 = inst.t1, inst.t2
    lo, U = (1.0 - delta) * y, (1.0 + delta) * y
    clamp = lambda t: min(max(t, t1), t2)
    if U <= t1:
        return OneMaxPolicy(t1, d_max(t1, inst, None, y, delta))
    if lo >= t2:
        return OneMaxPolicy(t2, d_max(t2, inst, None, y, delta))
    cands = [clamp(lo), t1, t2]
    if U <= t2:
        cands.append(clamp(math.sqrt(U)))
    else:
        cands.append(clamp(((t2 - U) + math.sqrt((t2 - U) ** 2 + 4.0 * t2 * t2 * U)) / (2.0 * t2)))
    vals = [(d_max(t, inst, None, y, delta), t) for t in cands]
    v, t = min(vals)
    return OneMaxPolicy(t, v)


def _balance_v1_v4(T: float, y: float, delta: float) -> float:
    h = y * delta
    v1 = (T - 1.0) * (T - (1.0 - delta) * y) / h
    v4 = ((1.0 + delta) * y - T) ** 2 / (4.0 * h * T)
    return v1 - v4


def optimize_T_max_weighted(
    inst: OneMaxInstance, w: WeightFunction, y: float, delta: float, grid: int = 4096
) -> OneMaxPolicy:
    """Threshold minimizing the weighted maximum distance.

    Uniform weights use the closed form of
    :func:`optimize_T_max_unweighted`.  Linear weights with ``R_y`` inside
    ``[t1, t2]`` solve the game balance equation on ``[(1-delta)y, y]``.
    Everything else runs a numeric minimax over ``[t1, t2]``.
    """
    _check_delta(delta)
    t1, t2 = inst.t1, inst.t2
    if w.family == "uniform":
        return optimize_T_max_unweighted(inst, y, delta)
    if delta == 0.0:
        t = min(max(y, t1), t2)
        return OneMaxPolicy(t, d_max(t, inst, w, y, delta))
    lo, hi = (1.0 - delta) * y, (1.0 + delta) * y
    if w.family == "linear" and t1 <= lo and hi <= t2:
        roots = find_roots(lambda t: _balance_v1_v4(t, y, delta), lo, y)
        if roots:
            t = min(max(roots[0], t1), t2)
            return OneMaxPolicy(t, d_max(t, inst, w, y, delta))
    f = lambda t: d_max(t, inst, w, y, delta)
    cands = [c for c in (lo, hi, y) if t1 <= c <= t2]
    x, v = minimize_scalar(f, t1, t2, grid=grid, candidates=cands)
    return OneMaxPolicy(x, v)


def d_avg(T: float, inst: OneMaxInstance, w: WeightFunction | None, y: float, delta: float) -> float:
    """Weighted average distance ``(1/(2 delta y)) int_{R_y} (pr - ideal) w``.

    A zero-width range returns the pointwise distance at ``y``.
    """
    _check_delta(delta)
    w = _weight(w, y, delta)
    rng = PredictionRange.from_prediction(y, delta)
    if rng.width == 0.0:
        return float((perf_ratio(T, y) - ideal_pr(inst, y)) * w(y))
    total = 0.0
    for a, c, p, q in _distance_pieces(T, inst, rng.lower, rng.upper, extra=(w.peak,)):
        if p == q == 0.0:
            continue
        total += w.piece_integral(p, q, 0.0, a, c)
    return total / rng.width


def optimize_T_avg(inst: OneMaxInstance, w: WeightFunction | None, y: float, delta: float, grid: int = 4096) -> OneMaxPolicy:
    """Robust threshold minimizing the weighted average distance."""
    _check_delta(delta)
    t1, t2 = inst.t1, inst.t2
    if delta == 0.0:
        t = min(max(y, t1), t2)
        return OneMaxPolicy(t, 0.0 if t == y else d_avg(t, inst, w, y, delta))
    f = lambda t: d_avg(t, inst, w, y, delta)
    cands = [c for c in ((1 - delta) * y, (1 + delta) * y, y) if t1 <= c <= t2]
    x, v = minimize_scalar(f, t1, t2, grid=grid, candidates=cands)
    return OneMaxPolicy(x, v)


def cvar_profit(T, mu: DistributionalPrediction, alpha: float, y: float, delta: float):
    """CVaR of the profit of ``A_T`` under the worst-case distribution.

    ``max{(T(1-alpha-q_T) + q_T)/(1-alpha), (1-delta)y}`` with
    ``q_T = P(x < T)`` the probability of selling at 1.  Vectorized over
    ``T``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    T = np.asarray(T, dtype=float)
    q = np.asarray(mu.cdf(T))
    if mu.degenerate:
        q = np.where(T > mu.lower, 1.0, 0.0)
    first = (T * (1.0 - alpha - q) + q) / (1.0 - alpha)
    out = np.maximum(first, (1.0 - delta) * y)
    return float(out) if out.ndim == 0 else out


def cvar_profit_limit(y: float, delta: float) -> float:
    """Limit of :func:`cvar_profit` as ``alpha -> 1``: the range's lower end."""
    return (1.0 - delta) * y


def expected_profit(T, mu: DistributionalPrediction):
    """``E[profit]`` of ``A_T`` under the worst-case distribution."""
    T = np.asarray(T, dtype=float)
    q = np.asarray(mu.cdf(T))
    if mu.degenerate:
        q = np.where(T > mu.lower, 1.0, 0.0)
    out = q + T * (1.0 - q)
    return float(out) if out.ndim == 0 else out


def optimize_T_cvar(
    inst: OneMaxInstance,
    mu: DistributionalPrediction,
    alpha: float,
    y: float,
    delta: float,
    prefer: str = "largest",
    grid: int = 4096,
) -> OneMaxPolicy:
    """Robust threshold maximizing the CVaR of the profit.

    When the floor ``(1-delta)y`` dominates, every threshold ties; ``prefer``
    selects the ``"largest"`` or ``"smallest"`` tied threshold.  A point-mass
    prediction (``delta = 0``) returns the prediction itself, clamped.
    """
    if prefer not in ("largest", "smallest"):
        raise ValueError("prefer must be 'largest' or 'smallest'")
    t1, t2 = inst.t1, inst.t2
    if delta == 0.0 or mu.degenerate:
        t = min(max(y, t1), t2)
        return OneMaxPolicy(t, float(cvar_profit(t, mu, alpha, y, delta)))
    f = lambda t: -np.asarray(cvar_profit(t, mu, alpha, y, delta))
    cands = [c for c in (mu.lower, mu.upper, mu.center) if t1 <= c <= t2]
    x, v = minimize_scalar(
        f, t1, t2, grid=grid, candidates=cands, vectorized=True,
        prefer="right" if prefer == "largest" else "left",
    )
    return OneMaxPolicy(x, -v)


def alpha_consistency(T: float, mu: DistributionalPrediction, alpha: float, y: float, delta: float) -> float:
    """``E[x] / CVaR_alpha[profit]``."""
    return mu.expectation() / float(cvar_profit(T, mu, alpha, y, delta))


def _po2(y: float, inst: OneMaxInstance, delta: float) -> float:
    return min(inst.t2, max(inst.t1, y))


def baselines(
    y: float,
    inst: OneMaxInstance,
    delta: float,
    clamp: bool = True,
    po1: Callable[[float, OneMaxInstance, float], float] | None = None,
) -> dict[str, float]:
    """Thresholds of the prediction-based baselines.

    Args:
        clamp: clamp the delta-tolerant threshold ``(1-delta)y`` to
            ``[t1, t2]``.
        po1: threshold rule for the first Pareto-optimal baseline.  Its
            formula is external to this package; when omitted the second
            baseline's rule is used and a warning is emitted.
    """
    _check_delta(delta)
    tol = (1.0 - delta) * y
    if clamp:
        tol = min(max(tol, inst.t1), inst.t2)
    if po1 is None:
        warnings.warn("no PO1 rule supplied; falling back to the PO2 threshold", stacklevel=2)
        po1 = _po2
    return {"delta_tol": tol, "po2": _po2(y, inst, delta), "po1": float(po1(y, inst, delta))}

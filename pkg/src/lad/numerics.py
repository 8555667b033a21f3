"""Shared numerical substrate.

Prediction ranges, bitonic weight functions, bounded prediction
distributions, and the scalar root finding, quadrature and minimization
routines used by the problem modules.

Most distance functions in this package are, on each smooth piece, of the
form ``(p + q*x + s/x) * w(x)``.  :class:`WeightFunction` therefore knows
how to locate the stationary points of such products and how to integrate
them, which lets the problem modules evaluate suprema and averages exactly
instead of on dense grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo
from scipy.special import ndtr, ndtri

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Gauss-Legendre rule used for weights without closed-form antiderivatives.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class PredictionRange:
    """Closed interval ``[lower, upper]`` guaranteed to contain the truth.

    ``upper`` may be ``math.inf`` for an unbounded range.  When built with
    :meth:`from_prediction` the generating ``y`` and ``delta`` are kept.
    """

    lower: float
    upper: float
    y: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("range bounds must not be NaN")
        if self.lower < 0:
            raise ValueError(f"range lower bound must be >= 0, got {self.lower}")
        if self.upper < self.lower:
            raise ValueError(f"range upper bound {self.upper} < lower bound {self.lower}")
        if math.isinf(self.lower):
            raise ValueError("range lower bound must be finite")

    @classmethod
    def from_prediction(cls, y: float, delta: float) -> PredictionRange:
        """Range ``[(1-delta)y, (1+delta)y]``."""
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {delta}")
        if y <= 0:
            raise ValueError(f"prediction y must be positive, got {y}")
        return cls((1.0 - delta) * y, (1.0 + delta) * y, y=float(y), delta=float(delta))

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def center(self) -> float:
        if self.y is not None:
            return self.y
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        out = (x >= self.lower) & (x <= self.upper)
        return bool(out) if out.ndim == 0 else out


WEIGHT_FAMILIES = ("uniform", "linear", "gaussian")


@dataclass(frozen=True)
class WeightFunction:
    """Bitonic importance weight over a prediction range.

    Families:
        uniform: 1 on the range.
        linear: tent peaking at 1 on ``peak`` and vanishing at both ends.
        gaussian: unnormalized normal density ``exp(-(x-y)^2/(2 sigma^2)) /
            (sigma sqrt(2 pi))``, zero outside the range.  ``sigma`` defaults
            to a quarter of the half-width, i.e. ``delta*y/4``.
    """

    family: str
    range: PredictionRange
    peak: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}; expected one of {WEIGHT_FAMILIES}")
        peak = self.range.center if self.peak is None else float(self.peak)
        if self.range.bounded and not (self.range.lower <= peak <= self.range.upper):
            raise ValueError("weight peak must lie inside the range")
        object.__setattr__(self, "peak", peak)
        if self.family != "uniform" and not self.range.bounded:
            raise ValueError(f"{self.family} weight requires a bounded range")
        if self.family == "gaussian":
            sigma = self.sigma
            if sigma is None:
                half = 0.5 * self.range.width
                sigma = half / 4.0
            if not sigma > 0:
                raise ValueError("gaussian weight needs sigma > 0 (non-degenerate range)")
            object.__setattr__(self, "sigma", float(sigma))

    @classmethod
    def build(cls, family: str, y: float, delta: float, sigma: float | None = None) -> WeightFunction:
        """Weight of ``family`` on ``[(1-delta)y, (1+delta)y]`` peaking at ``y``."""
        rng = PredictionRange.from_prediction(y, delta)
        return cls(family, rng, peak=y, sigma=sigma)

    # ---- pointwise evaluation -------------------------------------------------
    def _side_value(self, x, side: int):
        """Closed-form value of the piece on ``side`` (-1 left, +1 right) of the peak."""
        x = np.asarray(x, dtype=float)
        if self.family == "uniform":
            return np.ones_like(x)
        if self.family == "linear":
            h = (self.peak - self.range.lower) if side < 0 else (self.range.upper - self.peak)
            if h <= 0:
                return np.where(x == self.peak, 1.0, 0.0)
            return 1.0 - np.abs(x - self.peak) / h
        z = (x - self.peak) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * SQRT_2PI)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.range.lower) & (x <= self.range.upper)
        val = np.where(x < self.peak, self._side_value(x, -1), self._side_value(x, 1))
        out = np.where(inside, np.maximum(val, 0.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x: float) -> float | tuple[float, float]:
        """Analytic derivative; a ``(left, right)`` pair at kink points."""
        x = float(x)
        lo, hi = self.range.lower, self.range.upper

        def one_side(side: int, xx: float) -> float:
            if side < 0 and not (lo < xx <= hi) or side > 0 and not (lo <= xx < hi):
                return 0.0
            s = -1 if xx < self.peak or (xx == self.peak and side < 0) else 1
            if self.family == "uniform":
                return 0.0
            if self.family == "linear":
                h = (self.peak - lo) if s < 0 else (hi - self.peak)
                return (1.0 / h) if s < 0 else (-1.0 / h)
            return -(xx - self.peak) / self.sigma**2 * float(self._side_value(xx, s))

        left, right = one_side(-1, x), one_side(1, x)
        if left != right:
            return (left, right)
        return left

    # ---- rational-times-weight helpers ---------------------------------------
    def kinks(self) -> list[float]:
        """Points where the weight is not smooth (inside the closed range)."""
        pts = [self.range.lower]
        if self.range.bounded:
            pts.append(self.range.upper)
        if self.family == "linear":
            pts.append(self.peak)
        return pts

    def _side_poly(self, side: int) -> tuple[float, float] | None:
        """``(alpha, beta)`` with ``w = alpha + beta*x`` on a side, else None."""
        if self.family == "uniform":
            return 1.0, 0.0
        if self.family == "linear":
            if side < 0:
                h = self.peak - self.range.lower
                return (1.0 - self.peak / h, 1.0 / h) if h > 0 else (0.0, 0.0)
            h = self.range.upper - self.peak
            return (1.0 + self.peak / h, -1.0 / h) if h > 0 else (0.0, 0.0)
        return None

    def stationary_points(self, p: float, q: float, s: float, a: float, b: float) -> list[float]:
        """Stationary points in ``(a, b)`` of ``(p + q x + s/x) w(x)``."""
        if not b > a:
            return []
        if a < self.peak < b and self.family == "linear":
            return self.stationary_points(p, q, s, a, self.peak) + self.stationary_points(p, q, s, self.peak, b)
        side = -1 if b <= self.peak else 1
        poly = self._side_poly(side)
        if poly is not None:
            al, be = poly
            # x^2 g'(x) = 2 q be x^3 + (q al + p be) x^2 - s al
            coeffs = [2.0 * q * be, q * al + p * be, 0.0, -s * al]
        else:
            y, v = self.peak, self.sigma**2
            # sigma^2 x^2 g'(x) / w(x)
            coeffs = [-q, q * y - p, v * q - s + p * y, s * y, -v * s]
        roots = _real_poly_roots(coeffs)
        return [float(r) for r in roots if a < r < b]

    def piece_sup(self, p: float, q: float, s: float, a: float, b: float) -> float:
        """Supremum over the closed piece ``[a, b]`` of ``(p + q x + s/x) w_side(x)``.

        Endpoint values use the piece's own formula, so they equal the
        one-sided limits from inside the piece.  ``b`` may be ``inf``.
        A piece straddling the peak is split there.
        """
        if a < self.peak < b and self.family != "uniform":
            return max(self.piece_sup(p, q, s, a, self.peak), self.piece_sup(p, q, s, self.peak, b))
        side = -1 if b <= self.peak else 1
        pts = [a]
        if math.isfinite(b):
            pts.append(b)
        pts += self.stationary_points(p, q, s, a, b)
        best = max(self._piece_value(p, q, s, x, side) for x in pts)
        if not math.isfinite(b):
            if self.family != "uniform":
                raise ValueError("unbounded pieces are only supported for uniform weights")
            tail = p if q == 0 else (math.inf if q > 0 else -math.inf)
            best = max(best, tail)
        return best

    def _piece_value(self, p: float, q: float, s: float, x: float, side: int) -> float:
        base = p + q * x + (s / x if s != 0.0 else 0.0)
        return base * float(self._side_value(x, side))

    def piece_integral(self, p: float, q: float, s: float, a: float, b: float) -> float:
        """``int_a^b (p + q x + s/x) w(x) dx``; a piece straddling the peak is split there."""
        if not b > a:
            return 0.0
        if a < self.peak < b and self.family == "linear":
            return self.piece_integral(p, q, s, a, self.peak) + self.piece_integral(p, q, s, self.peak, b)
        side = -1 if b <= self.peak else 1
        poly = self._side_poly(side)
        if poly is not None:
            al, be = poly
            out = (p * al) * (b - a) + 0.5 * (p * be + q * al) * (b * b - a * a)
            out += (q * be) * (b**3 - a**3) / 3.0
            if s != 0.0:
                out += s * al * math.log(b / a) + s * be * (b - a)
            return out
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid + half * _GL_NODES
        f = (p + q * x + (s / x if s != 0.0 else 0.0)) * self._side_value(x, side)
        return float(half * np.dot(_GL_WEIGHTS, f))


def _real_poly_roots(coeffs: Sequence[float], tol: float = 1e-12) -> list[float]:
    """Real roots of a polynomial (highest degree first), dropping x=0 factors."""
    c = np.asarray(coeffs, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return []
    c = c / scale
    nz = np.flatnonzero(np.abs(c) > tol)
    if nz.size == 0:
        return []
    c = c[nz[0]: nz[-1] + 1]
    deg = c.size - 1
    if deg == 0:
        return []
    if deg == 1:
        return [-c[1] / c[0]]
    if deg == 2:
        a2, b2, c2 = c
        disc = b2 * b2 - 4 * a2 * c2
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        qv = -0.5 * (b2 + math.copysign(sq, b2))
        out = [qv / a2]
        if qv != 0.0:
            out.append(c2 / qv)
        return out
    r = np.roots(c)
    return [float(z.real) for z in r if abs(z.imag) <= 1e-9 * max(1.0, abs(z.real))]


DISTRIBUTION_FAMILIES = ("uniform", "gaussian", "triangular")


@dataclass(frozen=True)
class DistributionalPrediction:
    """Distribution of the unknown input over a bounded support.

    Families:
        uniform: uniform on the support.
        gaussian: normal(center, sigma) truncated to the support.
        triangular: tent density on the support peaking at ``center``.

    A zero-width support is a point mass at ``support.lower``.
    """

    family: str
    support: PredictionRange
    center: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.family not in DISTRIBUTION_FAMILIES:
            raise ValueError(f"unknown distribution family {self.family!r}; expected one of {DISTRIBUTION_FAMILIES}")
        if not self.support.bounded:
            raise ValueError("distributional predictions need a bounded support")
        c = self.support.center if self.center is None else float(self.center)
        lo, hi = self.support.lower, self.support.upper
        if not lo <= c <= hi:
            raise ValueError("distribution center must lie in the support")
        object.__setattr__(self, "center", c)
        if self.family == "gaussian" and self.support.width > 0:
            sigma = self.sigma if self.sigma is not None else self.support.width / 8.0
            if not sigma > 0:
                raise ValueError("gaussian prediction needs sigma > 0")
            object.__setattr__(self, "sigma", float(sigma))

    @classmethod
    def build(cls, family: str, y: float, delta: float, sigma: float | None = None) -> DistributionalPrediction:
        """Distribution of ``family`` on ``[(1-delta)y, (1+delta)y]`` centered at ``y``."""
        return cls(family, PredictionRange.from_prediction(y, delta), center=y, sigma=sigma)

    @property
    def lower(self) -> float:
        return self.support.lower

    @property
    def upper(self) -> float:
        return self.support.upper

    @property
    def degenerate(self) -> bool:
        return self.support.width == 0.0

    def _std(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.sigma

    @property
    def _gauss_mass(self) -> tuple[float, float, float]:
        a = (self.lower - self.center) / self.sigma
        b = (self.upper - self.center) / self.sigma
        fa, fb = float(ndtr(a)), float(ndtr(b))
        return fa, fb, fb - fa

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        inside = (x >= lo) & (x <= hi)
        if self.degenerate:
            out = np.where(x == lo, np.inf, 0.0)
        elif self.family == "uniform":
            out = np.where(inside, 1.0 / (hi - lo), 0.0)
        elif self.family == "gaussian":
            _, _, z = self._gauss_mass
            u = self._std(x)
            out = np.where(inside, np.exp(-0.5 * u * u) / (SQRT_2PI * self.sigma * z), 0.0)
        else:
            c = self.center
            left = 2.0 * (x - lo) / ((hi - lo) * (c - lo)) if c > lo else np.zeros_like(x)
            right = 2.0 * (hi - x) / ((hi - lo) * (hi - c)) if hi > c else np.zeros_like(x)
            out = np.where(inside, np.where(x < c, left, right), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        if self.degenerate:
            out = np.where(x >= lo, 1.0, 0.0)
        else:
            xc = np.clip(x, lo, hi)
            if self.family == "uniform":
                out = (xc - lo) / (hi - lo)
            elif self.family == "gaussian":
                fa, _, z = self._gauss_mass
                out = (ndtr(self._std(xc)) - fa) / z
            else:
                c = self.center
                left = (xc - lo) ** 2 / ((hi - lo) * (c - lo)) if c > lo else np.zeros_like(xc)
                right = 1.0 - (hi - xc) ** 2 / ((hi - lo) * (hi - c)) if hi > c else np.ones_like(xc)
                out = np.where(xc <= c, left, right)
            out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def quantile(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if np.any((a <= 0) | (a >= 1)):
            raise ValueError("quantile level must lie in (0, 1)")
        return self._ppf(a)

    def _ppf(self, a):
        """Inverse cdf on the closed interval [0, 1]."""
        a = np.asarray(a, dtype=float)
        lo, hi = self.lower, self.upper
        if self.degenerate:
            out = np.full_like(a, lo)
        elif self.family == "uniform":
            out = lo + a * (hi - lo)
        elif self.family == "gaussian":
            fa, _, z = self._gauss_mass
            out = self.center + self.sigma * ndtri(fa + a * z)
        else:
            c = self.center
            fc = (c - lo) / (hi - lo)
            left = lo + np.sqrt(a * (hi - lo) * (c - lo))
            right = hi - np.sqrt((1.0 - a) * (hi - lo) * (hi - c))
            out = np.where(a <= fc, left, right)
        out = np.clip(out, lo, hi)
        return float(out) if out.ndim == 0 else out

    def partial_expectation(self, a, b):
        """``int_a^b z pdf(z) dz`` (zero when ``b <= a``); vectorized."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo, hi = self.lower, self.upper
        ac, bc = np.clip(a, lo, hi), np.clip(b, lo, hi)
        if self.degenerate:
            out = np.where((a <= lo) & (b >= lo) & (b > a), lo, 0.0)
        elif self.family == "uniform":
            out = (bc * bc - ac * ac) / (2.0 * (hi - lo))
        elif self.family == "gaussian":
            _, _, z = self._gauss_mass
            ua, ub = self._std(ac), self._std(bc)
            phi = lambda u: np.exp(-0.5 * u * u) / SQRT_2PI
            out = (self.center * (ndtr(ub) - ndtr(ua)) - self.sigma * (phi(ub) - phi(ua))) / z
        else:
            out = self._tri_partial(bc) - self._tri_partial(ac)
        out = np.where(b > a, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def _tri_partial(self, x):
        """``int_lo^x z pdf(z) dz`` for the triangular family."""
        lo, hi, c = self.lower, self.upper, self.center
        w = hi - lo
        x = np.asarray(x, dtype=float)

        def left(t):
            if c <= lo:
                return np.zeros_like(t)
            return 2.0 / (w * (c - lo)) * ((t**3 - lo**3) / 3.0 - lo * (t * t - lo * lo) / 2.0)

        def right(t):
            if hi <= c:
                return np.zeros_like(t)
            return 2.0 / (w * (hi - c)) * (hi * (t * t - c * c) / 2.0 - (t**3 - c**3) / 3.0)

        return np.where(x <= c, left(np.minimum(x, c)), left(np.asarray(c)) + right(np.maximum(x, c)))

    def expectation(self) -> float:
        if self.degenerate:
            return self.lower
        return float(self.partial_expectation(self.lower, self.upper))

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-cdf sampling."""
        return self._ppf(rng.uniform(0.0, 1.0, size=size))


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    breakpoints: Iterable[float] = (),
    tol: float = 1e-9,
) -> float:
    """Adaptive quadrature of ``f`` over ``[a, b]``, split at ``breakpoints``.

    Raises:
        ValueError: if ``a > b`` or ``f`` produces a non-finite value.
    """
    if a > b:
        raise ValueError(f"integration bounds reversed: a={a} > b={b}")
    if a == b:
        return 0.0
    cuts = sorted({a, b, *(float(t) for t in breakpoints if a < t < b)})

    def guarded(x):
        v = f(x)
        if not np.isfinite(v):
            raise ValueError(f"integrand is not finite at x={x}: {v}")
        return v

    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, _ = _spi.quad(guarded, lo, hi, epsabs=tol * 1e-2, epsrel=1e-12, limit=200)
        total += val
    return total


def _pieces(a: float, b: float, breakpoints: Iterable[float]) -> list[tuple[float, float]]:
    cuts = sorted({a, b, *(float(t) for t in breakpoints if a < t < b)})
    return list(zip(cuts[:-1], cuts[1:]))


def find_roots(
    f: Callable[[float], float],
    a: float,
    b: float,
    breakpoints: Iterable[float] = (),
    scan: int = 2048,
) -> list[float]:
    """All sign-change roots of ``f`` on ``[a, b]`` minus the breakpoints.

    Each smooth piece is scanned at ``scan`` points; brackets are refined
    with Brent's method to an interval width of ``1e-12*(b-a)``.
    """
    if a > b:
        raise ValueError(f"root bracket reversed: a={a} > b={b}")
    bps = set(float(t) for t in breakpoints)
    xtol = max(1e-12 * (b - a), 1e-300)
    roots: list[float] = []
    for lo, hi in _pieces(a, b, bps):
        xs = np.linspace(lo, hi, scan)
        if lo in bps:
            xs[0] = np.nextafter(lo, hi)
        if hi in bps:
            xs[-1] = np.nextafter(hi, lo)
        fs = np.array([f(x) for x in xs], dtype=float)
        for i in range(len(xs)):
            if fs[i] == 0.0:
                roots.append(float(xs[i]))
        for i in range(len(xs) - 1):
            f0, f1 = fs[i], fs[i + 1]
            if np.isfinite(f0) and np.isfinite(f1) and f0 * f1 < 0:
                roots.append(float(_spo.brentq(f, xs[i], xs[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)))
    roots.sort()
    out: list[float] = []
    for r in roots:
        if not out or r - out[-1] > 10 * xtol:
            out.append(r)
    return out


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12, maxiter: int = 200):
    """Golden-section search for a minimum of ``f`` on ``[a, b]``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def minimize_scalar(
    f: Callable,
    a: float,
    b: float,
    grid: int = 4096,
    candidates: Iterable[float] = (),
    prefer: str = "left",
    vectorized: bool = False,
    tie_tol: float = 1e-14,
) -> tuple[float, float]:
    """Global minimizer of ``f`` on ``[a, b]``: dense scan then golden refinement.

    Args:
        f: objective.  With ``vectorized=True`` it must map arrays to arrays.
        grid: number of scan points.
        candidates: extra points evaluated exactly (kinks, closed-form guesses).
        prefer: ``"left"`` or ``"right"``; which optimum to return on ties
            (values within ``tie_tol`` relative of each other).

    Returns:
        ``(argmin, min)``.
    """
    if a > b:
        raise ValueError(f"minimization interval reversed: a={a} > b={b}")
    if prefer not in ("left", "right"):
        raise ValueError("prefer must be 'left' or 'right'")
    if a == b:
        return a, float(f(np.array([a]))[0]) if vectorized else float(f(a))
    xs = np.linspace(a, b, max(int(grid), 3))
    extra = np.array(sorted(float(c) for c in candidates if a <= c <= b), dtype=float)
    pts = np.concatenate([xs, extra])
    if vectorized:
        vals = np.asarray(f(pts), dtype=float)
    else:
        vals = np.array([f(x) for x in pts], dtype=float)
    vals = np.where(np.isnan(vals), np.inf, vals)
    i = int(np.argmin(vals[: xs.size]))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
    fs = (lambda x: float(np.asarray(f(np.array([x])))[0])) if vectorized else (lambda x: float(f(x)))
    xg, fg = golden_section(fs, lo, hi)
    allx = np.concatenate([pts, [xg]])
    allf = np.concatenate([vals, [fg]])
    best = float(np.min(allf))
    tol = tie_tol * max(1.0, abs(best))
    tied = allx[allf <= best + tol]
    x = float(tied.min() if prefer == "left" else tied.max())
    return x, float(allf[allx == x].min())

"""Experiment harness.

Draws predictions, fits every algorithm's policy, measures the average
performance ratio over inputs in the prediction range and the expected
cost, profit or completed length under the predicted distribution, and
aggregates over repetitions with bootstrap confidence intervals.

Each repetition derives its own random stream from ``(seed, index)``, so
reports are reproducible bit for bit and independent of evaluation order.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import contract, one_max, ski_rental
from .numerics import DistributionalPrediction, PredictionRange, WeightFunction

PROBLEMS = ("ski", "onemax", "contract")

_DEFAULTS = {
    "ski": dict(b=10.0, r=5.0, z=4.0, delta=0.9, weight="linear", inner_sampling="uniform"),
    "onemax": dict(M=1000.0, r=100.0, z=10.0, delta=0.9, weight="linear", inner_sampling="uniform"),
    "contract": dict(delta=1.0 / 3.0, weight="gaussian", inner_sampling="mu"),
}


@dataclass
class ExperimentConfig:
    """Knobs of one experiment.

    Attributes:
        problem: ``"ski"``, ``"onemax"`` or ``"contract"``.
        b, r, M: problem constants (``r`` defaults per problem).
        z: spread of the prediction draw (``y ~ U[b/z, bz]`` for ski,
            ``U[z, M/z]`` for one-max).
        y_bounds: overrides the prediction interval; contract defaults to
            ``[0.8e6, 1.2e6]``.
        delta: relative error bound of the prediction range.
        alphas: risk levels of the CVaR algorithms.
        weight: weight family for the distance-based algorithms.
        mu_family: family of the distributional prediction.
        repetitions: number of predictions drawn.
        inner_samples: inputs drawn per repetition.
        inner_sampling: ``"uniform"`` draws inputs uniformly on the range,
            ``"mu"`` draws them from the distributional prediction.
        y_sampling: ``"stratified"`` draws repetition ``i`` uniformly from
            the ``i``-th of ``repetitions`` equal strata; ``"iid"`` draws
            independently.
        grid: scan size of the per-repetition optimizers.
        bp_switch: whether the ski ``BP_rho`` baselines switch to
            ``b/(r-1)`` for large predictions.
        tol_clamp: whether the one-max delta-tolerant threshold is clamped
            to the robust interval.
        algorithms: subset of algorithm names to run (default: all).
        real_data: path of a price CSV (one-max real-data protocol).
    """

    problem: str = "ski"
    b: float = 10.0
    r: float | None = None
    M: float = 1000.0
    z: float | None = None
    y_bounds: tuple[float, float] | None = None
    delta: float | None = None
    alphas: tuple[float, ...] = (0.1, 0.5, 0.9)
    weight: str | None = None
    mu_family: str = "gaussian"
    repetitions: int = 1000
    inner_samples: int = 512
    inner_sampling: str | None = None
    y_sampling: str = "stratified"
    grid: int = 256
    bp_switch: bool = False
    tol_clamp: bool = False
    seed: int = 0
    bootstrap: int = 1000
    algorithms: tuple[str, ...] | None = None
    real_data: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        for k, v in _DEFAULTS[self.problem].items():
            if getattr(self, k, None) is None:
                setattr(self, k, v)
        if self.problem == "contract" and self.y_bounds is None:
            self.y_bounds = (0.8e6, 1.2e6)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.inner_samples < 1:
            raise ValueError("inner_samples must be >= 1")
        if self.inner_sampling not in ("uniform", "mu"):
            raise ValueError("inner_sampling must be 'uniform' or 'mu'")
        if self.y_sampling not in ("stratified", "iid"):
            raise ValueError("y_sampling must be 'stratified' or 'iid'")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        for a in self.alphas:
            if not 0.0 <= a < 1.0:
                raise ValueError(f"alpha must lie in [0, 1), got {a}")
        self.alphas = tuple(float(a) for a in self.alphas)
        if self.algorithms is not None:
            self.algorithms = tuple(self.algorithms)
        if self.y_bounds is not None:
            self.y_bounds = (float(self.y_bounds[0]), float(self.y_bounds[1]))
        if self.real_data is not None and self.problem != "onemax":
            raise ValueError("the real-data protocol is only defined for one-max search")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("alphas", "algorithms", "y_bounds"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ReportRow:
    """Aggregated results of one algorithm."""

    name: str
    avg_perf_ratio: float
    ci_plus: float
    ci_minus: float
    expected_value: float
    ev_ci_plus: float
    ev_ci_minus: float


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    value_label: str = "Exp. value"

    def row(self, name: str) -> ReportRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_dict(self) -> dict[str, ReportRow]:
        return {r.name: r for r in self.rows}


# ---- sampling -----------------------------------------------------------------

def repetition_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for repetition ``index``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def prediction_bounds(config: ExperimentConfig) -> tuple[float, float]:
    if config.y_bounds is not None:
        lo, hi = config.y_bounds
    elif config.problem == "ski":
        lo, hi = config.b / config.z, config.b * config.z
    elif config.problem == "onemax":
        lo, hi = config.z, config.M / config.z
    else:
        lo, hi = 0.8e6, 1.2e6
    if not 0 < lo <= hi:
        raise ValueError(f"invalid prediction interval [{lo}, {hi}]")
    return lo, hi


def sample_prediction(config: ExperimentConfig, rng: np.random.Generator, index: int | None = None) -> float:
    """Draw a prediction ``y`` for repetition ``index``."""
    lo, hi = prediction_bounds(config)
    u = rng.uniform()
    if config.y_sampling == "stratified" and index is not None:
        u = (index + u) / config.repetitions
    return lo + u * (hi - lo)


# ---- confidence intervals -----------------------------------------------------

def confidence_interval(samples, level: float = 0.95, n_resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean as ``(upper - mean, mean - lower)``."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples for a confidence interval")
    mean = float(x.mean())
    if np.ptp(x) == 0:
        return 0.0, 0.0
    res = stats.bootstrap(
        (x,), np.mean, confidence_level=level, n_resamples=n_resamples,
        method="percentile", vectorized=True, rng=np.random.default_rng(seed),
    )
    lo, hi = res.confidence_interval
    return max(float(hi) - mean, 0.0), max(mean - float(lo), 0.0)


# ---- algorithm registries -----------------------------------------------------

@dataclass
class _Context:
    y: float
    delta: float
    weight: WeightFunction
    mu: DistributionalPrediction


def _fmt_alpha(a: float) -> str:
    return f"CVaR_{a:g}"


def ski_algorithms(config: ExperimentConfig) -> dict[str, Callable[[_Context], float]]:
    inst = ski_rental.SkiInstance(config.b, config.r)
    b, r, g = config.b, config.r, config.grid
    algs: dict[str, Callable[[_Context], float]] = {
        "Max": lambda c: ski_rental.optimize_T_max(inst, c.weight, grid=g).threshold,
        "Avg": lambda c: ski_rental.optimize_T_avg(inst, c.weight, grid=g).threshold,
    }
    for a in config.alphas:
        algs[_fmt_alpha(a)] = lambda c, a=a: ski_rental.optimize_T_cvar(inst, c.mu, a, grid=g).threshold
    for label, rho in (("BP_b", b), ("BP_b+br/2", b + b * r / 2.0), ("BP_b(r-1)", b * (r - 1.0))):
        algs[label] = lambda c, rho=rho: ski_rental.baseline_bp(c.y, rho, inst, switch=config.bp_switch).threshold
    return algs


def onemax_algorithms(config: ExperimentConfig, inst: one_max.OneMaxInstance | None = None) -> dict[str, Callable[[_Context], float]]:
    inst = inst or one_max.OneMaxInstance(config.M, config.r)
    g = config.grid
    algs: dict[str, Callable[[_Context], float]] = {
        "Max": lambda c: one_max.optimize_T_max_weighted(inst, c.weight, c.y, c.delta, grid=g).threshold,
        "Avg": lambda c: one_max.optimize_T_avg(inst, c.weight, c.y, c.delta, grid=g).threshold,
    }
    for a in config.alphas:
        algs[_fmt_alpha(a)] = lambda c, a=a: one_max.optimize_T_cvar(inst, c.mu, a, c.y, c.delta, grid=g).threshold

    def base(key):
        def fn(c):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return one_max.baselines(c.y, inst, c.delta, clamp=config.tol_clamp)[key]
        return fn

    algs["delta-Tol"] = base("delta_tol")
    algs["PO1"] = base("po1")
    algs["PO2"] = base("po2")
    return algs


def contract_algorithms(config: ExperimentConfig) -> dict[str, Callable[[_Context], float]]:
    g = config.grid
    algs: dict[str, Callable[[_Context], float]] = {
        "Max": lambda c: contract.optimize_lambda_max(c.weight, grid=g).lam,
        "Avg": lambda c: contract.optimize_lambda_avg(c.weight, grid=g).lam,
    }
    if config.delta <= 1.0 / 3.0 + 1e-12:
        for a in config.alphas:
            algs[_fmt_alpha(a)] = lambda c, a=a: contract.optimize_lambda_cvar(c.mu, a, c.y, c.delta, grid=g).lam
    algs["PO"] = lambda c: contract.baseline_schedule("po", c.y).lam
    algs["delta-Tol"] = lambda c: contract.baseline_schedule("delta_tol", c.y, c.delta).lam
    return algs


def algorithms_for(config: ExperimentConfig) -> dict[str, Callable[[_Context], float]]:
    reg = {"ski": ski_algorithms, "onemax": onemax_algorithms, "contract": contract_algorithms}[config.problem](config)
    if config.algorithms is None:
        return reg
    missing = [a for a in config.algorithms if a not in reg]
    if missing:
        raise ValueError(f"unknown algorithms {missing}; available: {list(reg)}")
    return {a: reg[a] for a in config.algorithms}


def _contract_ratios(lam: float, ts: np.ndarray) -> np.ndarray:
    k = np.floor(np.log2(ts / lam))
    k = np.where(lam * 2.0**k > ts, k - 1, k)
    k = np.where(lam * 2.0 ** (k + 1) <= ts, k + 1, k)
    return ts / (lam * 2.0 ** (k - 1))


def _ratio_and_value(config: ExperimentConfig, param: float, xs: np.ndarray, mu: DistributionalPrediction):
    if config.problem == "ski":
        return ski_rental.perf_ratio(param, xs, config.b).mean(), ski_rental.expected_cost(param, mu, config.b)
    if config.problem == "onemax":
        return one_max.perf_ratio(param, xs).mean(), one_max.expected_profit(param, mu)
    return _contract_ratios(param, xs).mean(), contract.expected_length(param, mu)


_VALUE_LABEL = {"ski": "Exp. cost", "onemax": "Exp. profit", "contract": "Exp. length"}


def evaluate_algorithm(config: ExperimentConfig, algorithm: str) -> ReportRow:
    """Report row of a single algorithm."""
    return run_experiment(dataclasses.replace(config, algorithms=(algorithm,))).rows[0]


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every configured algorithm over all repetitions."""
    if config.real_data is not None:
        return run_real_onemax(config, load_price_series(config.real_data))
    algs = algorithms_for(config)
    n = config.repetitions
    ratios = {k: np.empty(n) for k in algs}
    values = {k: np.empty(n) for k in algs}
    for i in range(n):
        rng = repetition_rng(config.seed, i)
        y = sample_prediction(config, rng, i)
        d = config.delta
        ctx = _Context(
            y, d,
            WeightFunction.build(config.weight, y, d),
            DistributionalPrediction.build(config.mu_family, y, d),
        )
        if config.inner_sampling == "mu":
            xs = np.asarray(ctx.mu.sample(rng, config.inner_samples))
        else:
            xs = rng.uniform((1.0 - d) * y, (1.0 + d) * y, config.inner_samples)
        for name, fn in algs.items():
            ratios[name][i], values[name][i] = _ratio_and_value(config, fn(ctx), xs, ctx.mu)
    return _aggregate(config, algs, ratios, values, _VALUE_LABEL[config.problem])


def _aggregate(config, algs, ratios, values, label) -> ExperimentReport:
    rows = []
    for j, name in enumerate(algs):
        rr, vv = ratios[name], values[name]
        if rr.size >= 2:
            cp, cm = confidence_interval(rr, n_resamples=config.bootstrap, seed=config.seed + 2 * j)
            ep, em = confidence_interval(vv, n_resamples=config.bootstrap, seed=config.seed + 2 * j + 1)
        else:
            cp = cm = ep = em = 0.0
        rows.append(ReportRow(name, float(rr.mean()), cp, cm, float(vv.mean()), ep, em))
    return ExperimentReport(rows, label)


# ---- real price series --------------------------------------------------------

@dataclass(frozen=True)
class PriceDataset:
    """A price series with its maximum ``x`` and eight-segment spread ``delta_x``."""

    name: str
    prices: np.ndarray
    x: float
    delta_x: float

    @property
    def delta(self) -> float:
        return self.delta_x / self.x


def segment_spread(prices: Sequence[float], segments: int = 8) -> float:
    """Difference between the largest and smallest of the segment maxima."""
    arr = np.asarray(prices, dtype=float)
    if arr.size < segments:
        raise ValueError(f"need at least {segments} prices, got {arr.size}")
    maxima = [float(s.max()) for s in np.array_split(arr, segments)]
    return max(maxima) - min(maxima)


def _parse_float(s: str) -> float | None:
    try:
        return float(s)
    except ValueError:
        return None


def load_price_series(path) -> PriceDataset:
    """Read prices from a CSV with one price per row or ``timestamp,price`` rows.

    A non-numeric first row is treated as a header.

    Raises:
        OSError: if the file cannot be read.
        ValueError: on non-numeric or non-positive prices, or fewer than 8 rows.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    col = 1 if len(rows[0]) >= 2 else 0
    if _parse_float(rows[0][col].strip()) is None:
        rows = rows[1:]
    prices = []
    for lineno, r in enumerate(rows, start=1):
        if len(r) <= col:
            raise ValueError(f"{path}: row {lineno} has no price column")
        v = _parse_float(r[col].strip())
        if v is None:
            raise ValueError(f"{path}: non-numeric price {r[col]!r} in row {lineno}")
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{path}: prices must be positive, got {v} in row {lineno}")
        prices.append(v)
    arr = np.asarray(prices, dtype=float)
    spread = segment_spread(arr)
    return PriceDataset(path.stem, arr, float(arr.max()), spread)


# N(0, 1/2) truncated to [-1, 1], shifted by +1 because supports are nonnegative.
_PRED_NOISE = DistributionalPrediction("gaussian", PredictionRange(0.0, 2.0), center=1.0, sigma=0.5)


def gen_real_prediction(x: float, delta_x: float, rng: np.random.Generator, z: float | None = None) -> float:
    """``y = x + delta_x z`` with ``z ~ N(0, 1/2)`` truncated to ``[-1, 1]``.

    ``z`` may be pinned for testing.
    """
    if z is None:
        z = float(_PRED_NOISE.sample(rng)) - 1.0
    return x + delta_x * z


def run_real_onemax(config: ExperimentConfig, data: PriceDataset) -> ExperimentReport:
    """One-max protocol on a real price series.

    Prices are rescaled by the series minimum so they lie in ``[1, M]``.
    ``config.r`` is clamped into ``[sqrt(M), M]``; the upper end leaves every
    threshold in ``[1, M]`` admissible.  Unsold inventory goes at the series
    minimum.
    """
    base = float(data.prices.min())
    M = float(data.prices.max()) / base
    if M <= 1:
        raise ValueError("the price series is constant; one-max search is trivial")
    r = min(max(config.r, math.sqrt(M)), M)
    inst = one_max.OneMaxInstance(M, r)
    algs = onemax_algorithms(config, inst)
    if config.algorithms is not None:
        algs = {a: algs[a] for a in config.algorithms}
    runmax = np.maximum.accumulate(data.prices / base)
    scaled = data.prices / base
    x = data.x / base
    delta = min(data.delta, 1.0)
    n = config.repetitions
    ratios = {k: np.empty(n) for k in algs}
    values = {k: np.empty(n) for k in algs}
    for i in range(n):
        rng = repetition_rng(config.seed, i)
        y = gen_real_prediction(x, data.delta_x / base, rng)
        ctx = _Context(
            y, delta,
            WeightFunction.build(config.weight, y, delta) if delta > 0 else WeightFunction.build("uniform", y, 0.0),
            DistributionalPrediction.build(config.mu_family, y, delta),
        )
        for name, fn in algs.items():
            T = fn(ctx)
            idx = int(np.searchsorted(runmax, T, side="left"))
            profit = float(scaled[idx]) if idx < scaled.size else 1.0
            ratios[name][i] = x / profit
            values[name][i] = profit * base
    return _aggregate(config, algs, ratios, values, "Exp. profit")


# ---- output -------------------------------------------------------------------

def fmt(v: float) -> str:
    """Six significant digits."""
    return f"{v:.6g}"


def _report_table(report: ExperimentReport) -> tuple[list[str], list[list[str]]]:
    header = ["metric"] + [r.name for r in report.rows]
    layout = [
        ("Avg. ratio", "avg_perf_ratio"), ("CI+", "ci_plus"), ("CI-", "ci_minus"),
        (report.value_label, "expected_value"), ("CI+", "ev_ci_plus"), ("CI-", "ev_ci_minus"),
    ]
    if not report.rows:
        return header, []
    body = [[label] + [fmt(getattr(r, attr)) for r in report.rows] for label, attr in layout]
    return header, body


def emit_report(report: ExperimentReport, format: str = "csv") -> str:
    """Render a report with algorithms as columns and metrics as rows."""
    header, body = _report_table(report)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return buf.getvalue()
    if format == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def _left(x: float) -> float:
    return float(np.nextafter(x, -np.inf))


def emit_curves(
    problem: str,
    policies: Sequence[float],
    lower: float,
    upper: float,
    resolution: int = 200,
    b: float = 10.0,
    r: float | None = None,
    M: float = 1000.0,
) -> str:
    """CSV of performance-ratio curves of several policies and of the ideal.

    Columns are ``x``, one column per policy and ``ideal``.  At every
    discontinuity inside the interval two rows are written: the left limit
    and the value.
    """
    if not (upper > lower):
        raise ValueError(f"invalid curve interval [{lower}, {upper}]")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if problem == "ski":
        r = 5.0 if r is None else r
        cols = [lambda x, T=T: ski_rental.perf_ratio(T, x, b) for T in policies]
        ideal = lambda x: ski_rental.ideal_pr(r, b, x)
        jumps = list(policies) + [b * (r - 1.0)]
        labels = [f"T={fmt(T)}" for T in policies]
    elif problem == "onemax":
        r = 100.0 if r is None else r
        inst = one_max.OneMaxInstance(M, r)
        cols = [lambda x, T=T: one_max.perf_ratio(T, x) for T in policies]
        ideal = lambda x: one_max.ideal_pr(inst, x)
        jumps = list(policies) + [inst.t1]
        labels = [f"T={fmt(T)}" for T in policies]
        if lower < 1 or upper > M:
            raise ValueError(f"one-max curves must lie in [1, M={M}]")
    elif problem == "contract":
        if lower <= 0:
            raise ValueError("contract curves need positive times")
        cols = [lambda x, lam=lam: contract.perf_ratio(lam, x) for lam in policies]
        ideal = lambda x: contract.IDEAL_RATIO
        jumps = []
        for lam in policies:
            k = contract.completion_index(lam, lower)
            while lam * 2.0**k <= upper:
                jumps.append(lam * 2.0**k)
                k += 1
        labels = [f"lambda={fmt(lam)}" for lam in policies]
    else:
        raise ValueError(f"unknown problem {problem!r}")
    xs = set(np.linspace(lower, upper, resolution).tolist())
    jumps = sorted({j for j in jumps if lower < j <= upper})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x"] + labels + ["ideal"])
    for x in sorted(xs | set(jumps)):
        if x in jumps:
            xl = _left(x)
            w.writerow([fmt(x)] + [fmt(float(c(xl))) for c in cols] + [fmt(float(ideal(xl)))])
        w.writerow([fmt(x)] + [fmt(float(c(x))) for c in cols] + [fmt(float(ideal(x)))])
    return buf.getvalue()


def table1_config(seed: int = 0, **kw) -> ExperimentConfig:
    """Ski-rental table protocol (``b=10, r=5, z=4, delta=0.9``)."""
    return ExperimentConfig(problem="ski", b=10.0, r=5.0, z=4.0, delta=0.9, seed=seed, **kw)


def table2_config(seed: int = 0, **kw) -> ExperimentConfig:
    """One-max table protocol (``M=1000, r=100, z=10, delta=0.9``)."""
    return ExperimentConfig(problem="onemax", M=1000.0, r=100.0, z=10.0, delta=0.9, seed=seed, **kw)


def contract_config(delta: float = 1.0 / 3.0, weight: str = "gaussian", seed: int = 0, **kw) -> ExperimentConfig:
    """Contract-scheduling table protocol (``y ~ U[0.8e6, 1.2e6]``)."""
    return ExperimentConfig(problem="contract", delta=delta, weight=weight, seed=seed, **kw)

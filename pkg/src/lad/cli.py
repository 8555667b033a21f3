"""Command-line front end.

Subcommands:
    optimize    compute the optimal policy for one metric
    evaluate    report the metrics of a given policy
    experiment  run a benchmark protocol and write a report
    curves      write performance-ratio curves as CSV

Exit codes: 0 success, 2 invalid usage or parameters, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from typing import Sequence

from . import bench, contract, one_max, ski_rental
from .bench import fmt
from .numerics import DistributionalPrediction, PredictionRange, WeightFunction

EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


def _float(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"not a number: {s!r}") from None


def parse_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError(f"range must look like LO:HI, got {text!r}")
    lo, hi = (_float(p) for p in parts)
    if not lo <= hi:
        raise UsageError(f"range lower end {lo} exceeds upper end {hi}")
    return lo, hi


def parse_weight(text: str, rng: PredictionRange, peak: float | None) -> WeightFunction:
    """``uniform``, ``linear`` or ``gaussian[:SIGMA]`` over ``rng``."""
    family, *rest = text.split(":")
    sigma = _float(rest[0]) if rest else None
    if len(rest) > 1 or (rest and family != "gaussian"):
        raise UsageError(f"bad weight specification {text!r}")
    return WeightFunction(family, rng, peak=peak, sigma=sigma)


def parse_mu(text: str, rng: PredictionRange | None, center: float | None) -> DistributionalPrediction:
    """``FAMILY[:LO:HI[:SIGMA]]`` (gaussian) or ``FAMILY[:LO:HI[:CENTER]]`` (triangular)."""
    family, *rest = text.split(":")
    sigma = None
    if rest:
        if len(rest) < 2:
            raise UsageError(f"bad distribution specification {text!r}")
        lo, hi = _float(rest[0]), _float(rest[1])
        rng = PredictionRange(lo, hi)
        center = None
        if len(rest) == 3:
            if family == "gaussian":
                sigma = _float(rest[2])
            elif family == "triangular":
                center = _float(rest[2])
            else:
                raise UsageError(f"bad distribution specification {text!r}")
        elif len(rest) > 3:
            raise UsageError(f"bad distribution specification {text!r}")
    if rng is None:
        raise UsageError("distribution needs a support: give FAMILY:LO:HI or --y/--delta")
    if not rng.bounded:
        raise UsageError("distribution support must be bounded")
    return DistributionalPrediction(family, rng, center=center, sigma=sigma)


def _prediction_range(args) -> PredictionRange | None:
    if args.range is not None:
        lo, hi = parse_range(args.range)
        return PredictionRange(lo, hi, y=args.y, delta=args.delta)
    if args.y is not None:
        if args.delta is None:
            raise UsageError("--y needs --delta (or give --range)")
        return PredictionRange.from_prediction(args.y, args.delta)
    return None


def _y_delta(args, rng: PredictionRange | None, mu: DistributionalPrediction | None) -> tuple[float, float]:
    """Prediction and relative error, inferred from the range or the distribution if absent."""
    if args.y is not None and args.delta is not None:
        return args.y, args.delta
    src = rng if rng is not None else (mu.support if mu is not None else None)
    if src is None or not src.bounded or src.upper + src.lower == 0:
        raise UsageError("need --y and --delta (or a bounded --range / --mu)")
    y = args.y if args.y is not None else 0.5 * (src.lower + src.upper)
    delta = args.delta if args.delta is not None else (src.upper - src.lower) / (src.upper + src.lower)
    return y, delta


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("configuration file must hold a JSON object")
    return data


def _apply_config(args, cfg: dict, keys: Sequence[str]) -> None:
    """Fill unset flags from the configuration file; flags win."""
    for k in keys:
        if getattr(args, k, None) is None and k in cfg:
            setattr(args, k, cfg[k])


def _seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("LAD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"LAD_SEED must be an integer, got {env!r}") from None
    return int(cfg.get("seed", 0))


def _emit(lines: dict[str, float | str], out=None) -> None:
    out = out or sys.stdout
    for k, v in lines.items():
        out.write(f"{k}={fmt(v) if isinstance(v, float) else v}\n")


_PROBLEM_KEYS = ("metric", "w", "mu", "range", "y", "delta", "alpha", "r", "b", "M", "grid")


def _build_common(args):
    rng = _prediction_range(args)
    w = None
    if args.w is not None:
        if rng is None:
            raise UsageError("--w needs --range or --y/--delta")
        w = parse_weight(args.w, rng, args.y if args.y is not None else None)
    mu = None
    if args.mu is not None:
        mu = parse_mu(args.mu, rng, args.y)
    return rng, w, mu


def _need(x, flag: str):
    if x is None:
        raise UsageError(f"missing required parameter {flag}")
    return x


def _alpha(args) -> float:
    a = float(_need(args.alpha, "--alpha"))
    if not 0.0 <= a < 1.0:
        raise UsageError(f"--alpha must lie in [0, 1), got {a}")
    return a


def cmd_optimize(args) -> int:
    cfg = _load_config(args.config)
    _apply_config(args, cfg, _PROBLEM_KEYS)
    metric = _need(args.metric, "--metric")
    rng, w, mu = _build_common(args)
    grid = int(args.grid or 4096)
    if args.problem == "ski":
        inst = ski_rental.SkiInstance(args.b or 10.0, args.r or 5.0)
        if metric == "max":
            p = ski_rental.optimize_T_max(inst, w, rng, grid=grid)
        elif metric == "avg":
            p = ski_rental.optimize_T_avg(inst, w, rng, grid=grid)
        else:
            p = ski_rental.optimize_T_cvar(inst, _need(mu, "--mu"), _alpha(args), grid=grid)
        label = {"max": "d_max", "avg": "d_avg", "cvar": "cvar_cost"}[metric]
        _emit({"T": p.threshold, label: p.value})
    elif args.problem == "onemax":
        inst = one_max.OneMaxInstance(args.M or 1000.0, args.r or 100.0)
        y, delta = _y_delta(args, rng, mu)
        if metric == "max":
            if w is None or w.family == "uniform":
                p = one_max.optimize_T_max_unweighted(inst, y, delta)
            else:
                p = one_max.optimize_T_max_weighted(inst, w, y, delta, grid=grid)
            _emit({"T": p.threshold, "d_max": p.value})
        elif metric == "avg":
            p = one_max.optimize_T_avg(inst, w, y, delta, grid=grid)
            _emit({"T": p.threshold, "d_avg": p.value})
        else:
            mu = mu or DistributionalPrediction.build("gaussian", y, delta)
            a = _alpha(args)
            p = one_max.optimize_T_cvar(inst, mu, a, y, delta, grid=grid)
            _emit({"T": p.threshold, "cvar_profit": p.value,
                   "alpha_consistency": one_max.alpha_consistency(p.threshold, mu, a, y, delta)})
    else:
        if metric in ("max", "avg"):
            w = _need(w, "--w")
            fn = contract.optimize_lambda_max if metric == "max" else contract.optimize_lambda_avg
            s = fn(w, rng, grid=grid)
            _emit({"lambda": s.lam, f"d_{metric}": s.value})
        else:
            y, delta = _y_delta(args, rng, mu)
            if delta > 1.0 / 3.0 + 1e-12:
                raise UsageError(f"contract CVaR requires delta <= 1/3, got {delta}")
            mu = mu or DistributionalPrediction.build("gaussian", y, delta)
            s = contract.optimize_lambda_cvar(mu, _alpha(args), y, delta, grid=grid)
            _emit({"lambda": s.lam, "cvar_length": s.value})
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    _apply_config(args, cfg, _PROBLEM_KEYS + ("policy",))
    pol = float(_need(args.policy, "--policy"))
    rng, w, mu = _build_common(args)
    out: dict[str, float] = {}
    if args.problem == "ski":
        inst = ski_rental.SkiInstance(args.b or 10.0, args.r or 5.0)
        out["T"] = pol
        if rng is not None:
            out["d_max"] = ski_rental.d_max(pol, inst, w, rng)
            if rng.bounded:
                out["d_avg"] = ski_rental.d_avg(pol, inst, w, rng)
        if mu is not None:
            out["expected_cost"] = ski_rental.expected_cost(pol, mu, inst.b)
            if args.alpha is not None:
                out["cvar_cost"] = ski_rental.cvar_cost(pol, mu, _alpha(args), inst.b)
    elif args.problem == "onemax":
        inst = one_max.OneMaxInstance(args.M or 1000.0, args.r or 100.0)
        y, delta = _y_delta(args, rng, mu)
        out["T"] = pol
        out["d_max"] = one_max.d_max(pol, inst, w, y, delta)
        out["d_avg"] = one_max.d_avg(pol, inst, w, y, delta)
        if mu is not None:
            out["expected_profit"] = one_max.expected_profit(pol, mu)
            if args.alpha is not None:
                out["cvar_profit"] = one_max.cvar_profit(pol, mu, _alpha(args), y, delta)
    else:
        out["lambda"] = pol
        if w is not None:
            out["d_max"] = contract.d_max(pol, w, rng)
            out["d_avg"] = contract.d_avg(pol, w, rng)
        if mu is not None:
            out["expected_length"] = contract.expected_length(pol, mu)
            if args.alpha is not None:
                y, delta = _y_delta(args, rng, mu)
                out["cvar_length"] = contract.cvar_length(pol, mu, _alpha(args), y, delta)
    _emit(out)
    return 0


_EXPERIMENT_KEYS = ("reps", "delta", "weight", "mu_family", "alphas", "inner_samples", "inner_sampling",
                    "y_sampling", "grid", "r", "b", "M", "z", "format", "out", "real", "algorithms")


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    _apply_config(args, cfg, _EXPERIMENT_KEYS)
    kw: dict = {"problem": args.problem, "seed": _seed(args, cfg)}
    if args.table1 and args.problem != "ski":
        raise UsageError("--table1 is the ski-rental protocol")
    if args.table2 and args.problem != "onemax":
        raise UsageError("--table2 is the one-max protocol")
    mapping = {
        "reps": "repetitions", "delta": "delta", "weight": "weight", "mu_family": "mu_family",
        "inner_samples": "inner_samples", "inner_sampling": "inner_sampling", "y_sampling": "y_sampling",
        "grid": "grid", "r": "r", "b": "b", "M": "M", "z": "z", "real": "real_data",
    }
    for flag, key in mapping.items():
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if args.alphas is not None:
        kw["alphas"] = tuple(_float(a) for a in str(args.alphas).split(",")) if isinstance(args.alphas, str) else tuple(args.alphas)
    if args.algorithms is not None:
        kw["algorithms"] = tuple(args.algorithms.split(",")) if isinstance(args.algorithms, str) else tuple(args.algorithms)
    if "real_data" in kw and "repetitions" not in kw:
        kw["repetitions"] = 10000
    config = bench.ExperimentConfig(**kw)
    if config.real_data is not None:
        try:
            bench.load_price_series(config.real_data)
        except ValueError as exc:
            raise OSError(f"{config.real_data}: {exc}") from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = bench.run_experiment(config)
    text = bench.emit_report(report, args.format or "csv")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        summary = ", ".join(f"{r.name}={fmt(r.avg_perf_ratio)}" for r in report.rows)
        sys.stdout.write(f"wrote {args.out}: {summary}\n")
    else:
        sys.stdout.write(text)
    return 0


def cmd_curves(args) -> int:
    lo, hi = parse_range(_need(args.range, "--range"))
    if not math.isfinite(hi):
        raise UsageError("curves need a bounded --range")
    pols = [_float(p) for p in _need(args.policies, "--policies").split(",") if p.strip()]
    text = bench.emit_curves(args.problem, pols, lo, hi, resolution=args.resolution,
                             b=args.b or 10.0, r=args.r, M=args.M or 1000.0)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("problem", choices=("ski", "onemax", "contract"))
    p.add_argument("--w", help="weight: uniform | linear | gaussian[:SIGMA]")
    p.add_argument("--mu", help="distribution: FAMILY[:LO:HI[:SIGMA|CENTER]] with FAMILY uniform|gaussian|triangular")
    p.add_argument("--range", help="prediction range LO:HI (HI may be inf)")
    p.add_argument("--y", type=float, help="prediction")
    p.add_argument("--delta", type=float, help="relative error bound of the prediction range")
    p.add_argument("--alpha", type=float, help="CVaR risk level in [0, 1)")
    p.add_argument("--r", type=float, help="robustness target")
    p.add_argument("--b", type=float, help="ski rental buy cost")
    p.add_argument("--M", type=float, help="one-max price bound")
    p.add_argument("--grid", type=int, help="optimizer scan size (default 4096)")
    p.add_argument("--config", help="JSON file with default values for these flags")
    p.add_argument("--seed", type=int, help="random seed (falls back to LAD_SEED)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lad", description="Learning-augmented online algorithms: "
                                     "distance- and risk-based policy optimization and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimal policy for one metric")
    _add_problem_flags(p)
    p.add_argument("--metric", choices=("max", "avg", "cvar"))
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="metrics of a given policy")
    _add_problem_flags(p)
    p.add_argument("--policy", type=float, help="threshold T (ski, onemax) or lambda (contract)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a benchmark protocol")
    p.add_argument("problem", choices=("ski", "onemax", "contract"))
    p.add_argument("--table1", action="store_true", help="ski-rental table protocol")
    p.add_argument("--table2", action="store_true", help="one-max table protocol")
    p.add_argument("--real", help="price CSV for the one-max real-data protocol")
    p.add_argument("--reps", type=int, help="repetitions (default 1000; 10000 with --real)")
    p.add_argument("--delta", type=float)
    p.add_argument("--weight", choices=("uniform", "linear", "gaussian"))
    p.add_argument("--mu-family", dest="mu_family", choices=("uniform", "gaussian", "triangular"))
    p.add_argument("--alphas", help="comma-separated CVaR levels")
    p.add_argument("--algorithms", help="comma-separated subset of algorithms")
    p.add_argument("--inner-samples", dest="inner_samples", type=int)
    p.add_argument("--inner-sampling", dest="inner_sampling", choices=("uniform", "mu"))
    p.add_argument("--y-sampling", dest="y_sampling", choices=("stratified", "iid"))
    p.add_argument("--grid", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--z", type=float)
    p.add_argument("--seed", type=int, help="random seed (falls back to LAD_SEED)")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--format", choices=("csv", "markdown"))
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("curves", help="performance-ratio curves as CSV")
    p.add_argument("problem", choices=("ski", "onemax", "contract"))
    p.add_argument("--policies", help="comma-separated thresholds or lambdas")
    p.add_argument("--range", help="x interval LO:HI")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--r", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"lad {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"lad {args.command}: I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

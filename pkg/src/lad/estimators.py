"""Scikit-learn style wrappers around the policy optimizers.

Each estimator maps point predictions ``y`` to policies.  ``fit`` computes
one policy per prediction, ``transform`` returns the policy parameters for
new predictions, and ``predict`` evaluates the fitted policies on the true
inputs, returning performance ratios.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import contract, one_max, ski_rental
from .numerics import DistributionalPrediction, WeightFunction

OBJECTIVES = ("max", "avg", "cvar")


def check_predictions(X, name: str = "X", positive: bool = True) -> np.ndarray:
    """Validate a 1-D array or a single-column 2-D array of finite values."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must have a single column, got shape {X.shape}")
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {X.shape}")
    X = check_array(X.reshape(-1, 1), dtype=float, input_name=name)[:, 0]
    if positive and np.any(X <= 0):
        raise ValueError(f"{name} must be positive")
    return X


def check_unit_interval(value: float, name: str, closed_right: bool = False) -> float:
    v = float(value)
    ok = 0.0 <= v <= 1.0 if closed_right else 0.0 <= v < 1.0
    if not ok:
        raise ValueError(f"{name} must lie in [0, 1{']' if closed_right else ')'}, got {v}")
    return v


class _PolicyOptimizer(TransformerMixin, BaseEstimator):
    """Shared fit/transform/predict logic; subclasses implement ``_policy`` and ``_ratio``."""

    def _validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        check_unit_interval(self.delta, "delta", closed_right=True)
        check_unit_interval(self.alpha, "alpha")
        if int(self.grid) < 2:
            raise ValueError("grid must be >= 2")

    def _policy(self, y: float) -> tuple[float, float]:
        raise NotImplementedError

    def _ratio(self, policy: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fit(self, X, y=None):
        """Compute one policy per prediction in ``X``.

        Sets ``policies_`` (parameters), ``values_`` (objective values) and
        ``predictions_``.
        """
        self._validate()
        preds = check_predictions(X)
        out = np.array([self._policy(v) for v in preds], dtype=float).reshape(-1, 2)
        self.predictions_ = preds
        self.policies_ = out[:, 0]
        self.values_ = out[:, 1]
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        """Policy parameters for predictions ``X`` as a column vector."""
        check_is_fitted(self, "policies_")
        preds = check_predictions(X)
        return np.array([self._policy(v)[0] for v in preds], dtype=float).reshape(-1, 1)

    def predict(self, X):
        """Performance ratios of the fitted policies on true inputs ``X``.

        ``X`` has one input per fitted prediction, or a single input that
        is evaluated against every fitted policy.
        """
        check_is_fitted(self, "policies_")
        x = check_predictions(X, positive=False)
        if x.size == 1:
            x = np.full(self.policies_.size, x[0])
        if x.size != self.policies_.size:
            raise ValueError(f"expected {self.policies_.size} inputs, got {x.size}")
        return np.array([float(self._ratio(p, v)) for p, v in zip(self.policies_, x)])

    def score(self, X, y=None):
        """Negative mean performance ratio (higher is better)."""
        return -float(np.mean(self.predict(X)))


class SkiRentalOptimizer(_PolicyOptimizer):
    """Buy thresholds for ski rental.

    Args:
        b: buy cost.
        r: robustness target.
        objective: ``"max"``, ``"avg"`` or ``"cvar"``.
        weight: weight family for the distance objectives.
        mu_family: distribution family for CVaR.
        delta: relative error bound of the prediction range.
        alpha: CVaR level.
        grid: optimizer scan size.
    """

    def __init__(self, b=10.0, r=5.0, objective="max", weight="linear", mu_family="gaussian",
                 delta=0.9, alpha=0.5, grid=256):
        self.b = b
        self.r = r
        self.objective = objective
        self.weight = weight
        self.mu_family = mu_family
        self.delta = delta
        self.alpha = alpha
        self.grid = grid

    def _policy(self, y):
        inst = ski_rental.SkiInstance(self.b, self.r)
        if self.objective == "cvar":
            mu = DistributionalPrediction.build(self.mu_family, y, self.delta)
            p = ski_rental.optimize_T_cvar(inst, mu, self.alpha, grid=int(self.grid))
        else:
            w = WeightFunction.build(self.weight, y, self.delta)
            fn = ski_rental.optimize_T_max if self.objective == "max" else ski_rental.optimize_T_avg
            p = fn(inst, w, w.range, grid=int(self.grid))
        return p.threshold, p.value

    def _ratio(self, policy, x):
        return ski_rental.perf_ratio(policy, x, self.b)


class OneMaxOptimizer(_PolicyOptimizer):
    """Reservation prices for one-max search.

    Args:
        M: price bound.
        r: robustness target (at least ``sqrt(M)``).
        objective: ``"max"``, ``"avg"`` or ``"cvar"``.
        weight: weight family for the distance objectives.
        mu_family: distribution family for CVaR.
        delta: relative error bound of the prediction range.
        alpha: CVaR level.
        grid: optimizer scan size.
    """

    def __init__(self, M=1000.0, r=100.0, objective="max", weight="linear", mu_family="gaussian",
                 delta=0.9, alpha=0.5, grid=256):
        self.M = M
        self.r = r
        self.objective = objective
        self.weight = weight
        self.mu_family = mu_family
        self.delta = delta
        self.alpha = alpha
        self.grid = grid

    def _validate(self):
        super()._validate()
        if self.delta >= 1.0:
            raise ValueError("one-max needs delta < 1")

    def _policy(self, y):
        inst = one_max.OneMaxInstance(self.M, self.r)
        g = int(self.grid)
        if self.objective == "cvar":
            mu = DistributionalPrediction.build(self.mu_family, y, self.delta)
            p = one_max.optimize_T_cvar(inst, mu, self.alpha, y, self.delta, grid=g)
        else:
            w = WeightFunction.build(self.weight, y, self.delta)
            if self.objective == "max":
                p = one_max.optimize_T_max_weighted(inst, w, y, self.delta, grid=g)
            else:
                p = one_max.optimize_T_avg(inst, w, y, self.delta, grid=g)
        return p.threshold, p.value

    def _ratio(self, policy, x):
        return one_max.perf_ratio(policy, x)


class ContractScheduleOptimizer(_PolicyOptimizer):
    """Doubling-schedule parameters ``lambda`` for contract scheduling.

    Args:
        objective: ``"max"``, ``"avg"`` or ``"cvar"``.
        weight: weight family for the distance objectives.
        mu_family: distribution family for CVaR.
        delta: relative error bound of the prediction range (at most 1/3
            for CVaR).
        alpha: CVaR level.
        grid: optimizer scan size.
    """

    def __init__(self, objective="max", weight="gaussian", mu_family="gaussian", delta=1.0 / 3.0,
                 alpha=0.5, grid=256):
        self.objective = objective
        self.weight = weight
        self.mu_family = mu_family
        self.delta = delta
        self.alpha = alpha
        self.grid = grid

    def _policy(self, y):
        g = int(self.grid)
        if self.objective == "cvar":
            mu = DistributionalPrediction.build(self.mu_family, y, self.delta)
            s = contract.optimize_lambda_cvar(mu, self.alpha, y, self.delta, grid=g)
        else:
            w = WeightFunction.build(self.weight, y, self.delta)
            fn = contract.optimize_lambda_max if self.objective == "max" else contract.optimize_lambda_avg
            s = fn(w, w.range, grid=g)
        return s.lam, s.value

    def _ratio(self, policy, x):
        return contract.perf_ratio(policy, x)


__all__ = [
    "SkiRentalOptimizer",
    "OneMaxOptimizer",
    "ContractScheduleOptimizer",
    "check_predictions",
    "check_unit_interval",
]

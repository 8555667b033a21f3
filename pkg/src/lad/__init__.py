"""Learning-augmented online algorithms: policies chosen by weighted
distance to an ideal performance curve or by the CVaR of the outcome under
a distributional prediction, for ski rental, one-max search and contract
scheduling."""
from __future__ import annotations

from . import bench, contract, numerics, one_max, ski_rental
from .estimators import ContractScheduleOptimizer, OneMaxOptimizer, SkiRentalOptimizer
from .numerics import DistributionalPrediction, PredictionRange, WeightFunction

__version__ = "0.1.0"

__all__ = [
    "bench",
    "contract",
    "numerics",
    "one_max",
    "ski_rental",
    "ContractScheduleOptimizer",
    "OneMaxOptimizer",
    "SkiRentalOptimizer",
    "DistributionalPrediction",
    "PredictionRange",
    "WeightFunction",
]

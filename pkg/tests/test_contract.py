from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import contract_completed, contract_dense_dmax, contract_ratio
from lad import contract as ct
from lad.numerics import DistributionalPrediction, PredictionRange, WeightFunction, integrate


# ---- schedule basics -----------------------------------------------------------

@pytest.mark.parametrize("lam,t,expected", [(1.0, 10.0, 4.0), (1.25, 80.0, 40.0), (1.0, 16.0, 8.0)])
def test_largest_completed(lam, t, expected):
    assert ct.largest_completed(lam, t) == expected


def test_perf_ratio_and_left_limit():
    assert ct.perf_ratio(1.0, 10.0) == pytest.approx(2.5)
    assert ct.perf_ratio(1.0, 16.0) == pytest.approx(2.0)
    assert ct.perf_ratio_left(1.0, 16.0) == pytest.approx(4.0)
    assert ct.perf_ratio(1.0, np.nextafter(16.0, 0.0)) == pytest.approx(4.0)


@settings(max_examples=200)
@given(st.floats(1.0, 1.999999), st.floats(1e-3, 1e9))
def test_completion_index_brackets_time(lam, t):
    k = ct.completion_index(lam, t)
    assert lam * 2.0**k <= t < lam * 2.0 ** (k + 1)
    assert ct.largest_completed(lam, t) == pytest.approx(float(contract_completed(lam, t)[0]))


@settings(max_examples=200)
@given(st.floats(1e-6, 1e12))
def test_normalize_lambda_completes_at_target(t):
    lam = ct.normalize_lambda(t)
    assert 1.0 <= lam < 2.0
    k = ct.completion_index(lam, t)
    assert lam * 2.0**k == t


def test_schedule_validation():
    with pytest.raises(ValueError):
        ct.Schedule(2.0)
    with pytest.raises(ValueError):
        ct.d_max(0.5, WeightFunction.build("uniform", 100.0, 0.2))
    with pytest.raises(ValueError):
        ct.normalize_lambda(0.0)


# ---- distances -----------------------------------------------------------------

def test_d_max_examples():
    w = WeightFunction.build("uniform", 100.0, 0.2)
    assert ct.d_max(1.25, w) == pytest.approx(2 * 1.2 / 0.8 - 2)
    # completion at 100 lies strictly inside [80, 120]: ratio approaches 4
    assert ct.d_max(100 / 64, w) == pytest.approx(2.0)


def test_d_avg_example():
    w = WeightFunction.build("uniform", 100.0, 0.2)
    assert ct.d_avg(1.25, w) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(1.0, 1.999),
    st.floats(1.0, 1e6),
    st.floats(0.02, 0.9),
    st.sampled_from(["uniform", "linear", "gaussian"]),
)
def test_d_max_matches_dense_oracle(lam, y, delta, family):
    w = WeightFunction.build(family, y, delta)
    exact = ct.d_max(lam, w)
    dense = contract_dense_dmax(lam, w, w.range.lower, w.range.upper)
    scale = max(1.0, abs(dense))
    assert exact >= dense - 1e-9 * scale
    assert exact == pytest.approx(dense, rel=1e-4, abs=1e-6 * scale)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(1.0, 1.999),
    st.floats(1.0, 1e6),
    st.floats(0.02, 0.9),
    st.sampled_from(["uniform", "linear", "gaussian"]),
)
def test_d_avg_matches_quadrature(lam, y, delta, family):
    w = WeightFunction.build(family, y, delta)
    lo, hi = w.range.lower, w.range.upper
    breaks = [y] + [lam * 2.0**i for i in range(-80, 80) if lo < lam * 2.0**i < hi]
    f = lambda t: (float(contract_ratio(lam, t)[0]) - 2.0) * float(w(t))
    ref = integrate(f, lo, hi, breakpoints=breaks) / (hi - lo)
    assert ct.d_avg(lam, w) == pytest.approx(ref, rel=1e-7, abs=1e-10)


def test_d_avg_linear_closed_form_matches_quadrature():
    w = WeightFunction.build("linear", 100.0, 0.2)
    assert ct.d_avg_linear_closed_form(1.3, 100.0, 0.2) == pytest.approx(ct.d_avg(1.3, w), abs=1e-8)
    assert ct.d_avg(1.3, w) == pytest.approx(0.214558974, abs=1e-8)


# ---- optimizers ----------------------------------------------------------------

def test_optimize_max_uniform_recovers_tolerant_schedule():
    w = WeightFunction.build("uniform", 100.0, 0.2)
    s = ct.optimize_lambda_max(w)
    assert s.lam == 1.25
    assert s.value == pytest.approx(1.0)


def test_optimize_max_wide_range_is_flat():
    w = WeightFunction.build("uniform", 100.0, 0.4)
    s = ct.optimize_lambda_max(w)
    assert s.value == pytest.approx(2.0)
    for lam in (1.0, 1.3, 1.7):
        assert ct.d_max(lam, w) == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1e9), st.floats(0.0, 1.0 / 3.0))
def test_uniform_optimum_completes_at_lower_end(y, delta):
    w = WeightFunction.build("uniform", y, delta)
    s = ct.optimize_lambda_max(w, grid=128)
    assert s.lam == ct.normalize_lambda((1.0 - delta) * y)


def test_optimize_max_linear_matches_grid():
    w = WeightFunction.build("linear", 1e6, 0.2)
    s = ct.optimize_lambda_max(w)
    lams = np.linspace(1.0, 2.0, 10_001)[:-1]
    ref = min(ct.d_max(l, w) for l in lams)
    assert s.value <= ref + 1e-6


def test_optimize_avg_closed_form_agreement():
    y, delta = 1e6, 0.2
    w = WeightFunction.build("linear", y, delta)
    s = ct.optimize_lambda_avg(w)
    lam_cf = ct.lambda_avg_closed_form(y, delta, 18)
    assert lam_cf == pytest.approx(1.63337344, abs=1e-7)
    assert ct.d_avg(lam_cf, w) == pytest.approx(ct.d_avg_linear_closed_form(lam_cf, y, delta), abs=1e-10)
    assert s.value == pytest.approx(ct.d_avg(lam_cf, w), abs=1e-7)


def test_optimize_avg_uniform_matches_grid():
    w = WeightFunction.build("uniform", 100.0, 0.3)
    s = ct.optimize_lambda_avg(w)
    ref = min(ct.d_avg(l, w) for l in np.linspace(1.0, 2.0, 10_001)[:-1])
    assert s.value <= ref + 1e-9


def test_optimize_avg_zero_width():
    w = WeightFunction.build("uniform", 100.0, 0.0)
    s = ct.optimize_lambda_avg(w)
    assert s.lam == ct.normalize_lambda(100.0)


# ---- CVaR ----------------------------------------------------------------------

U = DistributionalPrediction("uniform", PredictionRange(80.0, 120.0))


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.9])
def test_cvar_tolerant_schedule(alpha):
    assert ct.cvar_length(1.25, U, alpha, 100.0, 0.2) == pytest.approx(40.0)


def test_cvar_rejects_wide_range_and_alpha():
    mu = DistributionalPrediction.build("uniform", 100.0, 0.4)
    with pytest.raises(ValueError):
        ct.cvar_length(1.25, mu, 0.5, 100.0, 0.4)
    with pytest.raises(ValueError):
        ct.cvar_length(1.25, U, 1.0, 100.0, 0.2)


@pytest.mark.parametrize("family", ["uniform", "gaussian", "triangular"])
@pytest.mark.parametrize("lam", [1.0, 1.25, 1.4, 1.5625, 1.9])
def test_cvar_alpha_zero_is_expectation(family, lam):
    mu = DistributionalPrediction.build(family, 100.0, 0.3)
    lo, hi = mu.lower, mu.upper
    breaks = [100.0] + [lam * 2.0**i for i in range(-10, 10) if lo < lam * 2.0**i < hi]
    ref = integrate(lambda t: float(contract_completed(lam, t)[0]) * float(mu.pdf(t)), lo, hi, breakpoints=breaks)
    assert ct.cvar_length(lam, mu, 0.0, 100.0, 0.3) == pytest.approx(ref, abs=1e-8)
    assert ct.expected_length(lam, mu) == pytest.approx(ref, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1.999), st.floats(0.0, 0.99), st.floats(0.0, 0.99), st.floats(0.02, 1.0 / 3.0))
def test_cvar_nonincreasing_in_alpha(lam, a1, a2, delta):
    mu = DistributionalPrediction.build("gaussian", 1e6, delta)
    lo, hi = sorted((a1, a2))
    assert ct.cvar_length(lam, mu, lo, 1e6, delta) >= ct.cvar_length(lam, mu, hi, 1e6, delta) - 1e-9


def test_cvar_limit_and_tolerant_recovery():
    assert ct.cvar_length_limit(1.25, 100.0, 0.2) == 40.0
    s = ct.optimize_lambda_cvar(U, 0.999, 100.0, 0.2)
    assert s.lam == pytest.approx(1.25)


def test_optimize_cvar_alpha_zero_matches_grid():
    s = ct.optimize_lambda_cvar(U, 0.0, 100.0, 0.2)
    lams = np.linspace(1.0, 2.0, 10_001)[:-1]
    ref = max(ct.cvar_length(l, U, 0.0, 100.0, 0.2) for l in lams)
    assert s.value >= ref - 1e-6


def test_optimize_cvar_point_mass():
    mu = DistributionalPrediction.build("gaussian", 100.0, 0.0)
    s = ct.optimize_lambda_cvar(mu, 0.5, 100.0, 0.0)
    assert s.lam == ct.normalize_lambda(100.0)


# ---- baselines and invariants --------------------------------------------------

def test_baselines():
    assert ct.baseline_schedule("po", 100.0).lam == pytest.approx(1.5625)
    assert ct.baseline_schedule("delta_tol", 100.0, 0.2).lam == pytest.approx(1.25)
    assert ct.baseline_schedule("po", 2.0**20).lam == 1.0
    with pytest.raises(ValueError):
        ct.baseline_schedule("oracle", 100.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(10.0, 1e7), st.floats(0.02, 1.0 / 3.0), st.sampled_from(["uniform", "linear", "gaussian"]))
def test_optimizers_robust_and_dominated(y, delta, family):
    w = WeightFunction.build(family, y, delta)
    mu = DistributionalPrediction.build("gaussian", y, delta)
    ts = np.geomspace(y / 100, y * 100, 5001)
    for s in (
        ct.optimize_lambda_max(w, grid=128),
        ct.optimize_lambda_avg(w, grid=128),
        ct.optimize_lambda_cvar(mu, 0.5, y, delta, grid=128),
    ):
        ratios = contract_ratio(s.lam, ts)
        assert np.all(ratios >= 2.0 - 1e-12)
        assert ratios.max() <= 4.0 + 1e-9


def test_uniform_optimum_at_one_third_breaks_tie_to_lower_end():
    # every schedule has d_max = 2 here; the tie goes to completion at (1-delta)y
    w = WeightFunction.build("uniform", 1.0, 1.0 / 3.0)
    s = ct.optimize_lambda_max(w)
    assert s.value == pytest.approx(2.0)
    assert s.lam == ct.normalize_lambda((1.0 - 1.0 / 3.0) * 1.0)

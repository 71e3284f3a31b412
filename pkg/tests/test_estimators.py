import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalfit import (
    EstimationError, NuisancePredictions, aipw_estimate, gcomp_estimate, tmle_estimate, tmle_target,
    truncate_propensity, wald_ci,
)

from oracles import aipw_oracle, tmle_oracle, truncation_oracle


def _nuis(ex):
    return NuisancePredictions(ex["E1"], ex["E0"], ex["PS"])


# ------------------------------------------------------------- truncation


def test_constant_ps_untouched():
    ps, bounds = truncate_propensity(np.full(9, 0.5))
    assert ps.tolist() == [0.5] * 9 and bounds == (0.5, 0.5)


def test_five_point_truncation_bounds():
    ps, (lo, hi) = truncate_propensity(truncation_oracle.FIVE)
    _, (olo, ohi) = truncation_oracle.truncate(truncation_oracle.FIVE)
    assert (lo, hi) == pytest.approx((olo, ohi), abs=1e-15)
    assert ps.min() == lo and ps.max() == hi


def test_grid_truncation_alters_ten_values():
    grid = np.array(truncation_oracle.GRID)
    ps, _ = truncate_propensity(grid)
    expected, _ = truncation_oracle.truncate(truncation_oracle.GRID)
    assert np.allclose(ps, expected, atol=1e-15)
    assert np.flatnonzero(ps != grid).tolist() == [0, 1, 2, 3, 4, 95, 96, 97, 98, 99]


@given(arrays(float, st.integers(2, 200), elements=st.floats(1e-4, 1 - 1e-4)))
def test_truncation_within_bounds_and_monotone(ps):
    out, (lo, hi) = truncate_propensity(ps)
    assert np.all((out >= lo) & (out <= hi))
    order = np.argsort(ps, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)


# ---------------------------------------------------------------- g-comp


def test_gcomp_examples():
    assert gcomp_estimate([1, 3], [0, 1]).psi == 1.5
    assert gcomp_estimate([2, 2], [2, 2]).psi == 0
    est = gcomp_estimate(np.arange(5) + 0.25, np.arange(5.0))
    assert est.psi == 0.25 and est.se is None and est.ci is None


# ------------------------------------------------------------------ AIPW


@pytest.mark.parametrize("ex", [aipw_oracle.EXAMPLE_A, aipw_oracle.EXAMPLE_B, aipw_oracle.EXAMPLE_C])
def test_aipw_matches_oracle(ex):
    est = aipw_estimate(ex["X"], ex["Y"], _nuis(ex))
    ref = aipw_oracle.aipw(**ex)
    assert est.psi == pytest.approx(ref["psi"], abs=1e-12)
    assert est.se == pytest.approx(ref["se"], abs=1e-12)


def test_aipw_closed_form_examples():
    a = aipw_estimate([1, 0], [1, 0], _nuis(aipw_oracle.EXAMPLE_A))
    assert (a.psi, a.se) == (1.0, 0.0)
    b = aipw_estimate([1, 0], [2, 1], _nuis(aipw_oracle.EXAMPLE_B))
    assert (b.psi, b.se) == (1.0, 2.0)


@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_aipw_reduces_to_ipw(seed, p):
    g = np.random.default_rng(seed)
    X = np.r_[1, 0, (g.random(20) < 0.5)].astype(float)
    Y = g.normal(size=22)
    est = aipw_estimate(X, Y, NuisancePredictions(np.zeros(22), np.zeros(22), np.full(22, p)))
    assert est.psi == pytest.approx(aipw_oracle.ipw(X, Y, p), rel=1e-12, abs=1e-12)


# ------------------------------------------------------------------ Wald


def test_wald_examples():
    lo, hi = wald_ci(1.0, 0.5)
    assert (lo, hi) == pytest.approx((0.020018, 1.979982), abs=1e-6)
    assert wald_ci(1.0, 0.0) == (1.0, 1.0)
    with pytest.raises(ValueError):
        wald_ci(1.0, 0.5, level=1.0)


# ------------------------------------------------------------------ TMLE


def test_tmle_four_record_example_matches_oracle():
    ex = tmle_oracle.FOUR_RECORD
    ref = tmle_oracle.target(**ex)
    tr = tmle_target(ex["X"], ex["Y"], _nuis(ex))
    assert tr.epsilon == pytest.approx(ref["epsilon"], abs=1e-8)
    assert tr.epsilon == pytest.approx(-math.log(0.6 / 0.4) / 2, abs=1e-12)
    assert np.mean(tr.E1star) == pytest.approx(ref["mean1"], abs=1e-8)
    assert np.mean(tr.E0star) == pytest.approx(ref["mean0"], abs=1e-8)
    est = tmle_estimate(ex["X"], ex["Y"], _nuis(ex))
    assert est.psi == pytest.approx(ref["psi"], abs=1e-8)


def test_tmle_general_example_matches_oracle():
    ex = aipw_oracle.EXAMPLE_C
    ref = tmle_oracle.target(**ex)
    est = tmle_estimate(ex["X"], ex["Y"], _nuis(ex))
    assert est.diagnostics["epsilon"] == pytest.approx(ref["epsilon"], abs=1e-8)
    assert est.psi == pytest.approx(ref["psi"], abs=1e-8)


def test_tmle_perfect_fit_no_update():
    # both extreme outcomes sit in the exposed arm with equal propensity, so the
    # clamping residuals at the scaled bounds cancel and the score is solved at zero
    X = np.array([1, 1, 1, 0, 0, 1.0])
    Y = np.array([0.0, 4.0, 1.5, 2.2, 3.1, 0.7])
    E1 = np.array([0.0, 4.0, 1.5, 2.0, 1.0, 0.7])
    E0 = np.array([1.0, 3.0, 0.5, 2.2, 3.1, 2.0])
    PS = np.array([0.4, 0.4, 0.3, 0.6, 0.5, 0.7])
    nuis = NuisancePredictions(E1, E0, PS)
    tr = tmle_target(X, Y, nuis)
    assert abs(tr.epsilon) < 1e-12
    inner = (E1 > 0) & (E1 < 4)
    assert np.allclose(tr.E1star[inner], E1[inner], atol=1e-10)
    assert np.allclose(tr.E0star, E0, atol=1e-10)


def test_tmle_zero_epsilon_when_score_solved():
    X = np.array([1, 1, 0, 0.0])
    Y = np.array([0.0, 1.0, 0.0, 1.0])
    nuis = NuisancePredictions(np.full(4, 0.5), np.full(4, 0.5), np.full(4, 0.5))
    tr = tmle_target(X, Y, nuis)
    assert tr.epsilon == 0.0
    assert np.array_equal(tr.E1star, np.full(4, 0.5))
    assert tmle_estimate(X, Y, nuis).psi == gcomp_estimate(nuis.E1, nuis.E0).psi


@given(st.integers(0, 10**6))
def test_tmle_substitution_bounds_and_score(seed):
    g = np.random.default_rng(seed)
    n = 40
    X = np.r_[1, 1, 0, 0, (g.random(n - 4) < 0.5)].astype(float)
    Y = g.normal(size=n) * g.uniform(0.1, 10)
    E1 = Y.mean() + g.normal(size=n)
    E0 = Y.mean() + g.normal(size=n)
    PS = g.uniform(0.05, 0.95, size=n)
    est = tmle_estimate(X, Y, NuisancePredictions(E1, E0, PS))
    a, b = Y.min(), Y.max()
    m1, m0 = est.diagnostics["targeted_means"]
    assert a <= m1 <= b and a <= m0 <= b
    assert -(b - a) <= est.psi <= b - a
    assert abs(est.diagnostics["eif_mean_centered"]) < 1e-6 * max(1.0, b - a)


def test_constant_outcome_rejected():
    with pytest.raises(ValueError, match="constant"):
        tmle_target([1, 0, 1, 0], [2, 2, 2, 2], NuisancePredictions([2] * 4, [2] * 4, [0.5] * 4))


def test_nuisance_validation():
    with pytest.raises(ValueError, match="strictly inside"):
        NuisancePredictions([0, 0], [0, 0], [0.0, 0.5])
    with pytest.raises(ValueError, match="equal length"):
        NuisancePredictions([0, 0], [0], [0.5, 0.5])


def test_estimation_error_is_runtime_error():
    assert issubclass(EstimationError, RuntimeError)


def test_effect_estimate_json_roundtrip():
    est = aipw_estimate([1, 0, 1, 0], [1.0, 0.2, 0.5, 0.1], NuisancePredictions([0.6] * 4, [0.2] * 4, [0.5] * 4))
    d = est.to_dict()
    assert d["method"] == "AIPW" and d["ci"][0] < d["psi"] < d["ci"][1]
    assert "diagnostics" not in d and "diagnostics" in est.to_dict(diagnostics=True)

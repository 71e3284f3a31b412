import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalfit import Library, RngStream, fit_super_learner, sl_predict
from causalfit.data import FoldPlan
from causalfit.learners import LearnerSpec, base_design
from causalfit.superlearner import cv_prediction_matrix, cv_risk, solve_meta_weights

from oracles.meta_weights_oracle import TARGET, best_weight

MEAN = Library.from_config(["mean-only"])


def test_complement_means_in_cv_matrix():
    d = base_design(np.arange(4.0)[:, None])
    folds = FoldPlan(2, np.array([0, 0, 1, 1]))
    Z = cv_prediction_matrix(MEAN, d, [1, 1, 3, 3], folds=folds).Z
    assert Z[:, 0].tolist() == [3, 3, 1, 1]


def test_cv_row_unaffected_by_own_target():
    g = np.random.default_rng(0)
    d = base_design(g.normal(size=(30, 2)))
    y = g.normal(size=30)
    folds = FoldPlan(3, np.arange(30) % 3)
    lib = Library.from_config(["glm-main", "mean-only"])
    Z = cv_prediction_matrix(lib, d, y, folds=folds, rng=RngStream(1)).Z
    y2 = y.copy()
    y2[4] += 100.0
    Z2 = cv_prediction_matrix(lib, d, y2, folds=folds, rng=RngStream(1)).Z
    same_fold = folds.assignment == folds.assignment[4]
    assert np.array_equal(Z[same_fold], Z2[same_fold])
    assert not np.allclose(Z[~same_fold], Z2[~same_fold])


def test_probability_cv_matrix_open_interval():
    g = np.random.default_rng(1)
    W = g.normal(size=(40, 2))
    x = (W[:, 0] > 0).astype(float)  # separable: raw fits would hit 0/1
    Z = cv_prediction_matrix(Library.from_config(["glm-main"]), base_design(W), x, V=4, task="probability").Z
    assert np.all((Z > 0) & (Z < 1))


def test_single_column_weight_one():
    assert solve_meta_weights(np.ones((5, 1)), np.arange(5.0)).tolist() == [1.0]


def test_constant_learners_match_grid_oracle():
    y = np.array(TARGET, dtype=float)
    Z = np.column_stack([np.zeros(10), np.ones(10)])
    w = solve_meta_weights(Z, y, "regression")
    (w0, w1), _ = best_weight(Z[:, 0], Z[:, 1], y)
    assert w == pytest.approx([w0, w1], abs=1e-4)
    assert w == pytest.approx([0.7, 0.3], abs=1e-12)


def test_perfect_column_gets_all_weight():
    g = np.random.default_rng(2)
    y = g.normal(size=50)
    Z = np.column_stack([g.normal(size=50), y, np.zeros(50)])
    assert solve_meta_weights(Z, y)[1] == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 10**6), st.integers(2, 6), st.sampled_from(["regression", "probability"]))
def test_weights_on_simplex_and_no_worse_than_best(seed, L, task):
    g = np.random.default_rng(seed)
    n = 40
    if task == "probability":
        y = (g.random(n) < 0.4).astype(float)
        y[:2] = [0, 1]
        Z = g.uniform(0.05, 0.95, size=(n, L))
    else:
        y = g.normal(size=n)
        Z = y[:, None] + g.normal(scale=g.uniform(0.2, 2.0, size=L), size=(n, L))
    w = solve_meta_weights(Z, y, task)
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-15)
    best = min(cv_risk(Z[:, l], y, task) for l in range(L))
    assert cv_risk(Z @ w, y, task) <= best + 1e-8


def test_exact_simplex_optimum_against_brute_force():
    g = np.random.default_rng(5)
    y = g.normal(size=30)
    Z = np.column_stack([y + g.normal(size=30), 0.5 * y, g.normal(size=30)])
    w = solve_meta_weights(Z, y)
    grid = np.linspace(0, 1, 201)
    best = min(np.mean((y - Z @ np.array([a, b, 1 - a - b])) ** 2)
               for a in grid for b in grid if a + b <= 1 + 1e-12)
    assert np.mean((y - Z @ w) ** 2) <= best + 1e-12


def test_single_learner_identity():
    g = np.random.default_rng(3)
    d = base_design(g.normal(size=(25, 2)))
    y = g.normal(size=25)
    fit = fit_super_learner(MEAN, d, y, rng=RngStream(0))
    assert fit.weights.tolist() == [1.0]
    assert np.array_equal(sl_predict(fit, d), np.full(25, y.mean()))


def test_linear_truth_prefers_glm():
    g = np.random.default_rng(4)
    W = g.normal(size=(100, 3))
    y = W @ [1.0, 2.0, -1.0] + 0.5
    fit = fit_super_learner(Library.from_config(["glm-main", "mean-only"]), base_design(W), y, rng=RngStream(1))
    assert fit.cv_risk[0] < 1e-20 < fit.cv_risk[1]
    assert fit.weights[0] >= 0.99


def test_same_rng_same_fit():
    g = np.random.default_rng(6)
    d = base_design(g.normal(size=(60, 3)))
    y = d.values[:, 0] + g.normal(size=60)
    a = fit_super_learner(Library.reduced(), d, y, rng=RngStream(9))
    b = fit_super_learner(Library.reduced(), d, y, rng=RngStream(9))
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(sl_predict(a, d), sl_predict(b, d))


def test_zero_weight_learners_not_refit():
    g = np.random.default_rng(7)
    W = g.normal(size=(60, 2))
    fit = fit_super_learner(Library.from_config(["glm-main", "mean-only"]), base_design(W), W[:, 0] * 3,
                            rng=RngStream(2))
    assert fit.weights[1] == 0 and fit.learners[1] is None


def test_convex_combination_prediction():
    d = base_design(np.arange(6.0)[:, None])
    lib = Library((LearnerSpec("constant", params={"value": 0.0}), LearnerSpec("constant", params={"value": 1.0})), "c")
    fit = fit_super_learner(lib, d, np.array([0, 1, 0, 1, 0, 1.0]), V=2, rng=RngStream(0))
    fit.weights = np.array([0.5, 0.5])
    assert sl_predict(fit, d).tolist() == [0.5] * 6
    fit.weights = np.array([1.0, 0.0])
    assert sl_predict(fit, d).tolist() == [0.0] * 6


def test_probability_predictions_never_degenerate():
    W = np.arange(20.0)[:, None]
    x = (W[:, 0] >= 10).astype(float)
    fit = fit_super_learner(Library.from_config(["glm-main"]), base_design(W), x, V=5, rng=RngStream(0),
                            task="probability")
    p = sl_predict(fit, base_design(W))
    assert np.all((p > 0) & (p < 1))


def test_library_parsing():
    assert Library.from_config("reduced").label == "reduced"
    assert len(Library.full()) == len(Library.reduced()) + 2
    lib = Library.from_config({"label": "mine", "learners": ["glm-main", {"kind": "random-forest",
                                                                           "params": {"n_trees": 10}}]})
    assert lib.labels == ["glm-main", "random-forest(n_trees=10)"]
    with pytest.raises(ValueError):
        Library.from_config(["no-such-learner"])

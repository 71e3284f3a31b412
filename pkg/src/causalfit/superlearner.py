"""Super Learner: cross-validated stacking of a learner library with convex weights."""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import FoldPlan, RngStream, stratified_assignment
from .learners import (
    PROB_CLAMP,
    ContractError,
    DesignMatrix,
    FittedLearner,
    LearnerSpec,
    fit_learner,
    predict_learner,
)

__all__ = [
    "Library",
    "CvPredictionMatrix",
    "SlFit",
    "cv_prediction_matrix",
    "solve_meta_weights",
    "fit_super_learner",
    "sl_predict",
    "cv_risk",
]

_REDUCED = (
    LearnerSpec("glm-main"),
    LearnerSpec("glm-interactions"),
    LearnerSpec("ridge-glm"),
    LearnerSpec("spline-glm"),
    LearnerSpec("elastic-net", params={"alpha": 1.0}),
    LearnerSpec("elastic-net", params={"alpha": 0.5}),
)
_FULL = _REDUCED + (LearnerSpec("random-forest"), LearnerSpec("gradient-boosted-trees"))


@dataclass(frozen=True)
class Library:
    """Ordered, duplicate-free list of learner specs."""

    learners: tuple[LearnerSpec, ...]
    label: str = "custom"

    def __post_init__(self):
        learners = tuple(self.learners)
        if not learners:
            raise ValueError("library must contain at least one learner")
        keys = [s.key() for s in learners]
        if len(set(keys)) != len(keys):
            raise ValueError("library contains duplicate learner specifications")
        object.__setattr__(self, "learners", learners)

    def __len__(self) -> int:
        return len(self.learners)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.learners]

    @classmethod
    def reduced(cls) -> "Library":
        return cls(_REDUCED, "reduced")

    @classmethod
    def full(cls) -> "Library":
        return cls(_FULL, "full")

    @classmethod
    def from_config(cls, cfg) -> "Library":
        """Build from ``"reduced"``, ``"full"``, a list of learner entries or ``{"label", "learners"}``.

        Strings that are neither library names nor learner kinds are read as JSON file paths.
        """
        if isinstance(cfg, Library):
            return cfg
        if isinstance(cfg, str):
            if cfg == "reduced":
                return cls.reduced()
            if cfg == "full":
                return cls.full()
            if Path(cfg).exists():
                return cls.from_config(json.loads(Path(cfg).read_text()))
            return cls((LearnerSpec(cfg),), cfg)
        if isinstance(cfg, Mapping):
            specs = tuple(LearnerSpec.from_dict(d) for d in cfg["learners"])
            return cls(specs, cfg.get("label", "custom"))
        specs = tuple(LearnerSpec.from_dict(d) for d in cfg)
        return cls(specs, "+".join(s.label for s in specs))

    def to_dict(self) -> dict:
        return {"label": self.label, "learners": [s.to_dict() for s in self.learners]}


@dataclass(frozen=True)
class CvPredictionMatrix:
    """Out-of-fold predictions: ``Z[i, l]`` comes from learner ``l`` fitted without record ``i``'s fold."""

    Z: np.ndarray
    folds: FoldPlan
    task: str
    labels: tuple[str, ...]


@dataclass
class SlFit:
    weights: np.ndarray
    learners: list[FittedLearner | None]
    task: str
    labels: tuple[str, ...]
    cv_risk: np.ndarray
    ensemble_cv_risk: float
    V: int
    contract: tuple[str, ...]

    @property
    def excess_risk(self) -> float:
        """Ensemble CV risk minus the best single learner's CV risk (<= 0 at optimum)."""
        if len(self.weights) == 1:
            return 0.0
        return float(self.ensemble_cv_risk - self.cv_risk.min())

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "V": self.V,
            "learners": list(self.labels),
            "weights": [float(w) for w in self.weights],
            "cv_risk": [float(r) for r in self.cv_risk],
            "ensemble_cv_risk": float(self.ensemble_cv_risk),
        }


def cv_risk(pred: np.ndarray, target: np.ndarray, task: str) -> float:
    """Mean squared error (regression) or mean negative log-likelihood (probability)."""
    if task == "probability":
        p = np.clip(pred, PROB_CLAMP, 1 - PROB_CLAMP)
        return float(-np.mean(target * np.log(p) + (1 - target) * np.log1p(-p)))
    return float(np.mean((target - pred) ** 2))


def _admissible_folds(V: int, target: np.ndarray, task: str, strata: np.ndarray | None) -> int:
    n = target.size
    limit = n
    if task == "probability":
        limit = int(min(target.sum(), n - target.sum()))
    if strata is not None:
        _, counts = np.unique(strata, return_counts=True)
        limit = min(limit, int(counts.min()))
    if limit < 2:
        raise ValueError("too few records per class or stratum for cross-validation")
    if V > limit:
        warnings.warn(f"reducing Super Learner folds from {V} to {limit}: training sets would be degenerate",
                      RuntimeWarning, stacklevel=3)
        return limit
    return V


def cv_prediction_matrix(library: Library, design: DesignMatrix, target, V: int = 10,
                         rng: RngStream | None = None, task: str = "regression",
                         strata=None, folds: FoldPlan | None = None) -> CvPredictionMatrix:
    """V-fold cross-validated predictions of every library learner.

    Folds are stratified by class for probability targets and by ``strata``
    (e.g. exposure) when given. ``folds`` overrides the random split.
    """
    y = np.asarray(target, dtype=float).ravel()
    if len(library) == 0:
        raise ValueError("library is empty")
    if y.size != design.n:
        raise ValueError("design and target lengths differ")
    if np.ptp(y) == 0:
        raise ValueError("target is constant")
    if V < 2:
        raise ValueError("V >= 2 folds required")
    rng = rng if rng is not None else RngStream(0)
    if folds is None:
        strata_arr = None if strata is None else np.asarray(strata).ravel()
        V = _admissible_folds(V, y, task, strata_arr)
        if task == "probability":
            key = y if strata_arr is None else y * 2 + strata_arr
        else:
            key = np.zeros(y.size) if strata_arr is None else strata_arr
        folds = FoldPlan(V, stratified_assignment(key, V, rng.child(0).gen))
    Z = np.empty((y.size, len(library)))
    for v in range(folds.K):
        tr, te = folds.train_index(v), folds.test_index(v)
        d_tr, d_te = design.rows(tr), design.rows(te)
        for l, spec in enumerate(library.learners):
            fit = fit_learner(spec.with_task(task), d_tr, y[tr], rng.child(1, v, l))
            Z[te, l] = predict_learner(fit, d_te)
    return CvPredictionMatrix(Z, folds, task, tuple(library.labels))


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _simplex_least_squares(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact minimiser of ``|y - Z w|^2`` over the probability simplex.

    Enumerates supports and solves each equality-constrained problem through its
    KKT system; the best feasible candidate is the global optimum.
    """
    L = Z.shape[1]
    G = Z.T @ Z
    b = Z.T @ y
    best_w, best_r = None, np.inf
    for size in range(1, L + 1):
        for S in itertools.combinations(range(L), size):
            S = list(S)
            k = len(S)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = G[np.ix_(S, S)]
            K[:k, k] = 1.0
            K[k, :k] = 1.0
            rhs = np.append(b[S], 1.0)
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            wS = sol[:k]
            if np.any(wS < -1e-12) or abs(wS.sum() - 1.0) > 1e-9:
                continue
            w = np.zeros(L)
            w[S] = np.maximum(wS, 0.0)
            w /= w.sum()
            r = float(np.sum((y - Z @ w) ** 2))
            if best_w is None or r < best_r - 1e-14 * max(1.0, best_r):
                best_w, best_r = w, r
    return best_w


def _projected_gradient(f, grad, w0: np.ndarray, tol: float = 1e-8, max_iter: int = 10000) -> np.ndarray:
    """Monotone projected-gradient descent on the simplex with step halving."""
    w, fw, t = w0.copy(), f(w0), 1.0
    for _ in range(max_iter):
        g = grad(w)
        while True:
            w_new = _project_simplex(w - t * g)
            f_new = f(w_new)
            if f_new <= fw - 1e-4 * float(g @ (w - w_new)) or t < 1e-14:
                break
            t *= 0.5
        if not f_new <= fw:
            break
        moved = np.max(np.abs(w_new - w))
        decrease = fw - f_new
        w, fw = w_new, f_new
        if decrease < tol or moved < tol:
            break
        t = min(t * 2.0, 1e6)
    return w


def solve_meta_weights(Z, target, task: str | None = None) -> np.ndarray:
    """Convex stacking weights minimising cross-validated risk.

    Regression: least squares over the simplex. Probability: log-loss over the
    simplex by projected gradient started at the best single learner, so the
    ensemble never does worse on the CV matrix than that learner.
    """
    if isinstance(Z, CvPredictionMatrix):
        task = task or Z.task
        Z = Z.Z
    task = task or "regression"
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(target, dtype=float).ravel()
    if not np.all(np.isfinite(Z)):
        raise ValueError("CV prediction matrix contains non-finite entries")
    L = Z.shape[1]
    if L == 1:
        return np.ones(1)
    risks = np.array([cv_risk(Z[:, l], y, task) for l in range(L)])
    best = int(np.argmin(risks))
    w = None
    if task == "regression":
        if L <= 12:
            w = _simplex_least_squares(Z, y)
        else:
            n = y.size
            w = _projected_gradient(lambda v: float(np.mean((y - Z @ v) ** 2)),
                                    lambda v: -2.0 * Z.T @ (y - Z @ v) / n, np.eye(L)[best])
    else:
        n = y.size

        def f(v):
            return cv_risk(Z @ v, y, "probability")

        def grad(v):
            p = np.clip(Z @ v, PROB_CLAMP, 1 - PROB_CLAMP)
            return -Z.T @ (y / p - (1 - y) / (1 - p)) / n

        w = _projected_gradient(f, grad, np.eye(L)[best])
    if w is None or not np.all(np.isfinite(w)) or w.sum() <= 0:
        w = np.eye(L)[best]  # discrete Super Learner fallback
    w = np.maximum(w, 0.0)
    return w / w.sum()


def fit_super_learner(library: Library, design: DesignMatrix, target, V: int = 10,
                      rng: RngStream | None = None, task: str = "regression",
                      strata=None, folds: FoldPlan | None = None) -> SlFit:
    """Cross-validate, solve convex weights, refit learners with positive weight on all rows.

    A one-learner library has weight 1 whatever the data, so its cross-validation
    is skipped and the CV risks are reported as NaN.
    """
    rng = rng if rng is not None else RngStream(0)
    y = np.asarray(target, dtype=float).ravel()
    if len(library) == 1:
        if y.size != design.n:
            raise ValueError("design and target lengths differ")
        learner = fit_learner(library.learners[0].with_task(task), design, y, rng.child(2, 0))
        return SlFit(np.ones(1), [learner], task, tuple(library.labels), np.array([np.nan]), np.nan,
                     0, design.columns)
    cvm = cv_prediction_matrix(library, design, y, V, rng, task, strata, folds)
    weights = solve_meta_weights(cvm, y)
    risks = np.array([cv_risk(cvm.Z[:, l], y, task) for l in range(len(library))])
    ens = cv_risk(cvm.Z @ weights, y, task)
    learners: list[FittedLearner | None] = []
    for l, spec in enumerate(library.learners):
        if weights[l] > 0:
            learners.append(fit_learner(spec.with_task(task), design, y, rng.child(2, l)))
        else:
            learners.append(None)
    return SlFit(weights, learners, task, cvm.labels, risks, ens, cvm.folds.K, design.columns)


def sl_predict(fit: SlFit, design: DesignMatrix) -> np.ndarray:
    if design.columns != fit.contract:
        raise ContractError("design columns do not match the Super Learner training contract")
    out = np.zeros(design.n)
    for w, learner in zip(fit.weights, fit.learners):
        if w > 0:
            out += w * predict_learner(learner, design)
    if fit.task == "probability":
        out = np.clip(out, PROB_CLAMP, 1 - PROB_CLAMP)
    return out

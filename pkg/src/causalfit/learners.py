"""Prediction learners for the outcome (regression) and exposure (probability) models.

Every learner receives a *base* :class:`DesignMatrix` of main-effect columns and
applies its own expansion (pairwise products, natural splines) internally, so a
library of heterogeneous learners can share one input contract.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels
from .data import RngStream, stratified_assignment

__all__ = [
    "KINDS",
    "PROB_CLAMP",
    "ContractError",
    "LearnerSpec",
    "DesignMatrix",
    "Expansion",
    "FittedLearner",
    "expand_design",
    "base_design",
    "fit_learner",
    "predict_learner",
]

PROB_CLAMP = 1e-6

_DEFAULTS: dict[str, dict[str, Any]] = {
    "mean-only": {},
    "constant": {"value": 0.5},
    "frozen-linear": {"intercept": 0.0, "coef": []},
    "glm-main": {"standardize": True},
    "glm-interactions": {"standardize": True},
    "ridge-glm": {"prior_scale": 2.5},
    "spline-glm": {"knots": 3},
    "elastic-net": {"alpha": 1.0, "n_lambda": 100, "cv_folds": 5, "lam": None,
                    "lambda_min_ratio": None, "tol": 1e-7},
    "random-forest": {"n_trees": 500, "max_depth": None, "mtry": None, "min_leaf": 5},
    "gradient-boosted-trees": {"n_rounds": 100, "rate": 0.1, "max_depth": 3, "min_leaf": 10},
}
KINDS = tuple(_DEFAULTS)
_TASKS = ("regression", "probability")


class ContractError(ValueError):
    """Prediction input does not match the design a learner was trained on."""


# --------------------------------------------------------------------- specs


@dataclass(frozen=True)
class LearnerSpec:
    """A learner kind plus hyperparameters; unspecified hyperparameters take defaults."""

    kind: str
    task: str = "regression"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.task not in _TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        merged = {**_DEFAULTS[self.kind], **self.params}
        _check_ranges(self.kind, merged)
        object.__setattr__(self, "params", merged)

    def with_task(self, task: str) -> "LearnerSpec":
        return replace(self, task=task, params=dict(self.params))

    @property
    def label(self) -> str:
        changed = {k: v for k, v in self.params.items() if _DEFAULTS[self.kind].get(k) != v}
        if not changed:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(changed.items()))
        return f"{self.kind}({inner})"

    def key(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params}, sort_keys=True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping | str, task: str = "regression") -> "LearnerSpec":
        if isinstance(d, str):
            return cls(d, task)
        return cls(d["kind"], d.get("task", task), dict(d.get("params", {})))


def _check_ranges(kind: str, p: Mapping[str, Any]) -> None:
    def need(cond, msg):
        if not cond:
            raise ValueError(f"{kind}: {msg}")

    if kind == "constant":
        need(np.isfinite(p["value"]), "value must be finite")
    elif kind == "ridge-glm":
        need(p["prior_scale"] > 0, "prior_scale must be > 0")
    elif kind == "spline-glm":
        need(int(p["knots"]) >= 1, "knots must be >= 1")
    elif kind == "elastic-net":
        need(0.0 <= p["alpha"] <= 1.0, "alpha must lie in [0, 1]")
        need(int(p["n_lambda"]) >= 1, "n_lambda must be >= 1")
        need(int(p["cv_folds"]) >= 2, "cv_folds must be >= 2")
        need(p["lam"] is None or p["lam"] >= 0, "lam must be >= 0")
        need(p["tol"] > 0, "tol must be > 0")
    elif kind == "random-forest":
        need(int(p["n_trees"]) >= 1, "n_trees must be >= 1")
        need(p["max_depth"] is None or int(p["max_depth"]) >= 0, "max_depth must be >= 0")
        need(p["mtry"] is None or int(p["mtry"]) >= 1, "mtry must be >= 1")
        need(int(p["min_leaf"]) >= 1, "min_leaf must be >= 1")
    elif kind == "gradient-boosted-trees":
        need(int(p["n_rounds"]) >= 1, "n_rounds must be >= 1")
        need(0 < p["rate"] <= 1, "rate must lie in (0, 1]")
        need(int(p["max_depth"]) >= 1, "max_depth must be >= 1")
        need(int(p["min_leaf"]) >= 1, "min_leaf must be >= 1")


# -------------------------------------------------------------------- design


@dataclass(frozen=True)
class Expansion:
    """Recipe that maps base columns to expanded columns; replayable on new rows."""

    kind: str
    base_columns: tuple[str, ...]
    continuous: tuple[bool, ...]
    knots: tuple[tuple[float, ...] | None, ...] = ()

    def apply(self, base: np.ndarray) -> tuple[np.ndarray, list[str], list[str], list[bool]]:
        base = np.asarray(base, dtype=float)
        names = list(self.base_columns)
        if self.kind == "main":
            return base, names, ["main"] * len(names), list(self.continuous)
        if self.kind == "pairwise":
            p = base.shape[1]
            cols, out_names, prov, cont = [base], list(names), ["main"] * p, list(self.continuous)
            ii, jj = np.triu_indices(p, k=1)
            if ii.size:
                cols.append(base[:, ii] * base[:, jj])
                out_names += [f"{names[i]}:{names[j]}" for i, j in zip(ii, jj)]
                prov += ["interaction"] * ii.size
                cont += [bool(self.continuous[i] or self.continuous[j]) for i, j in zip(ii, jj)]
            return np.hstack(cols), out_names, prov, cont
        if self.kind == "spline":
            cols, out_names, prov, cont = [], [], [], []
            for j, name in enumerate(names):
                kn = self.knots[j]
                if kn is None:
                    cols.append(base[:, j:j + 1])
                    out_names.append(name)
                    prov.append("main")
                    cont.append(self.continuous[j])
                    continue
                B = natural_spline_basis(base[:, j], np.asarray(kn))
                cols.append(B)
                out_names += [f"ns({name})[{b}]" for b in range(B.shape[1])]
                prov += ["spline"] * B.shape[1]
                cont += [True] * B.shape[1]
            return np.hstack(cols), out_names, prov, cont
        raise ValueError(f"unknown expansion {self.kind!r}")


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric design with column provenance and optional standardisation constants."""

    values: np.ndarray
    columns: tuple[str, ...]
    provenance: tuple[str, ...]
    continuous: tuple[bool, ...]
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    recipe: Expansion | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("design values must be a 2-D array")
        q = v.shape[1]
        if q < 1:
            raise ValueError("design must have at least one column")
        if not (len(self.columns) == len(self.provenance) == len(self.continuous) == q):
            raise ValueError("column metadata does not cover every design column")
        if not np.all(np.isfinite(v)):
            raise ValueError("design contains non-finite entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        object.__setattr__(self, "continuous", tuple(bool(c) for c in self.continuous))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def rows(self, idx) -> "DesignMatrix":
        return replace(self, values=self.values[np.asarray(idx)])

    def with_column(self, name: str, value: float) -> "DesignMatrix":
        """Copy with one column overwritten by a constant (e.g. exposure forced to 1)."""
        j = self.columns.index(name)
        v = self.values.copy()
        v[:, j] = value
        return replace(self, values=v)

    def standardized(self, center=None, scale=None) -> "DesignMatrix":
        """Centre and scale columns; constant columns keep scale 1."""
        if center is None:
            center = self.values.mean(axis=0)
            scale = self.values.std(axis=0)
            scale = np.where(scale > 1e-12 * np.maximum(1.0, np.abs(center)), scale, 1.0)
        return replace(self, values=(self.values - center) / scale,
                       center=np.asarray(center), scale=np.asarray(scale))


def base_design(W, names: Sequence[str] | None = None, continuous: Sequence[bool] | None = None,
                X=None, exposure_name: str = "X") -> DesignMatrix:
    """Main-effect design from confounders, optionally with the exposure as first column."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    names = list(names) if names is not None else [f"w{j + 1}" for j in range(W.shape[1])]
    if continuous is None:
        continuous = [not np.all((W[:, j] == 0) | (W[:, j] == 1)) for j in range(W.shape[1])]
    continuous = list(continuous)
    if X is not None:
        W = np.column_stack([np.asarray(X, dtype=float), W])
        names = [exposure_name] + names
        continuous = [False] + continuous
    return DesignMatrix(W, tuple(names), ("main",) * len(names), tuple(continuous))


def natural_spline_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Natural cubic spline basis (truncated-power form, no intercept).

    ``knots`` includes both boundary knots; returns ``len(knots) - 1`` columns,
    the first being linear. The basis is linear beyond the boundary knots.
    """
    lo, hi = knots[0], knots[-1]
    span = hi - lo
    u = (np.asarray(x, dtype=float) - lo) / span
    k = (knots - lo) / span
    K = k.size

    def d(j):
        return (np.maximum(u - k[j], 0.0) ** 3 - np.maximum(u - k[-1], 0.0) ** 3) / (k[-1] - k[j])

    cols = [u]
    last = d(K - 2)
    for j in range(K - 2):
        cols.append(d(j) - last)
    return np.column_stack(cols)


def expand_design(W, expansion: str = "main", continuous: Sequence[bool] | None = None,
                  knots: int = 3) -> DesignMatrix:
    """Expand a base design (or raw matrix) by main effects, pairwise products or splines.

    ``pairwise`` gives ``p + p(p-1)/2`` columns. ``spline`` replaces each
    continuous column by a natural cubic spline basis with ``knots`` interior
    knots at equally spaced quantiles (``knots + 1`` columns); binary columns
    pass through. Knots are stored in the recipe so new rows expand identically.
    """
    if not isinstance(W, DesignMatrix):
        W = base_design(W, continuous=continuous)
    elif continuous is not None:
        W = replace(W, continuous=tuple(continuous))
    if expansion not in ("main", "pairwise", "spline"):
        raise ValueError(f"unknown expansion {expansion!r}")
    knot_list: list = []
    if expansion == "spline":
        probs = np.arange(1, knots + 1) / (knots + 1)
        for j, cont in enumerate(W.continuous):
            if not cont:
                knot_list.append(None)
                continue
            x = W.values[:, j]
            if np.ptp(x) == 0:
                raise ValueError(f"constant column {W.columns[j]!r} cannot be spline-expanded")
            inner = np.quantile(x, probs)
            kn = np.unique(np.concatenate([[x.min()], inner, [x.max()]]))
            knot_list.append(tuple(float(v) for v in kn))
    recipe = Expansion(expansion, W.columns, W.continuous, tuple(knot_list))
    values, names, prov, cont = recipe.apply(W.values)
    return DesignMatrix(values, tuple(names), tuple(prov), tuple(cont), recipe=recipe)


# ------------------------------------------------------------------- fitting


@dataclass
class FittedLearner:
    """A trained learner bound to the base-design contract it was fitted on."""

    spec: LearnerSpec
    contract: tuple[str, ...]
    recipe: Expansion | None
    center: np.ndarray | None
    scale: np.ndarray | None
    model: dict
    info: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return len(self.contract)


def _expansion_for(spec: LearnerSpec) -> str | None:
    return {"glm-interactions": "pairwise", "spline-glm": "spline"}.get(spec.kind, "main")


def _check_target(spec: LearnerSpec, y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite values")
    if spec.task == "probability":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("probability task requires a 0/1 target")
        if y.min() == y.max():
            raise ValueError("probability task requires both classes in the target")


def fit_learner(spec: LearnerSpec, design: DesignMatrix, target, rng: RngStream) -> FittedLearner:
    """Fit ``spec`` to ``target`` on the base ``design``; deterministic given ``rng``."""
    y = np.asarray(target, dtype=float).ravel()
    if design.n == 0 or design.q == 0:
        raise ValueError("empty design")
    if y.size != design.n:
        raise ValueError(f"design has {design.n} rows but target has {y.size}")
    _check_target(spec, y)
    contract = design.columns
    kind, p = spec.kind, spec.params
    prob = spec.task == "probability"

    if kind == "mean-only":
        return FittedLearner(spec, contract, None, None, None, {"const": float(y.mean())})
    if kind == "constant":
        return FittedLearner(spec, contract, None, None, None, {"const": float(p["value"])})
    if kind == "frozen-linear":
        coef = np.asarray(p["coef"], dtype=float)
        if coef.size not in (0, design.q):
            raise ContractError(f"frozen-linear has {coef.size} coefficients for {design.q} columns")
        return FittedLearner(spec, contract, None, None, None,
                             {"b0": float(p["intercept"]), "coef": coef})

    expanded = expand_design(design, _expansion_for(spec), knots=int(p.get("knots", 3)))
    recipe = expanded.recipe

    if kind in ("random-forest", "gradient-boosted-trees"):
        Xe = expanded.values
        order = np.lexsort(np.column_stack([Xe, y]).T)  # canonical record order
        Xe, ys = np.ascontiguousarray(Xe[order]), y[order]
        _kernels.seed(rng.seed_int())
        if kind == "random-forest":
            model = _fit_forest(Xe, ys, p)
        else:
            model = _fit_boosting(Xe, ys, p, prob)
        return FittedLearner(spec, contract, recipe, None, None, model)

    std = expanded.standardized() if p.get("standardize", True) else expanded
    Xs = std.values
    info: dict = {}
    if kind in ("glm-main", "glm-interactions", "spline-glm"):
        model = _fit_glm(Xs, y, prob, info)
    elif kind == "ridge-glm":
        prior_sd = p["prior_scale"] / 2.0
        if prob:
            model = _fit_logistic(Xs, y, penalty=1.0 / prior_sd**2, info=info)
        else:
            model = _fit_ridge(Xs, y, penalty=float(np.var(y)) / prior_sd**2)
    elif kind == "elastic-net":
        model = _fit_enet(Xs, y, p, prob, rng, info)
    else:  # pragma: no cover - guarded by LearnerSpec
        raise ValueError(kind)
    return FittedLearner(spec, contract, recipe, std.center, std.scale, model, info)


def predict_learner(fit: FittedLearner, design: DesignMatrix) -> np.ndarray:
    """Predictions on a base design matching the training contract.

    Probability-task predictions are clamped to ``[1e-6, 1 - 1e-6]``.
    """
    if design.columns != fit.contract:
        raise ContractError(
            f"design columns {list(design.columns)[:6]}... (width {design.q}) do not match "
            f"training contract of width {fit.width}"
        )
    prob = fit.spec.task == "probability"
    m = fit.model
    kind = fit.spec.kind
    n = design.n
    if "const" in m:
        out = np.full(n, m["const"])
    elif kind == "frozen-linear":
        eta = m["b0"] + (design.values @ m["coef"] if m["coef"].size else 0.0)
        out = expit(eta) if prob else np.asarray(eta, dtype=float) * np.ones(n)
    else:
        Xe, *_ = fit.recipe.apply(design.values)
        if kind == "random-forest":
            out = _kernels.predict_forest(np.ascontiguousarray(Xe), *m["trees"])
        elif kind == "gradient-boosted-trees":
            raw = _kernels.predict_boosting(np.ascontiguousarray(Xe), *m["trees"], m["f0"], m["rate"])
            out = expit(raw) if m["logistic"] else raw
        else:
            if fit.center is not None:
                Xe = (Xe - fit.center) / fit.scale
            eta = m["b0"] + Xe @ m["coef"]
            out = expit(eta) if prob else eta
    if prob:
        out = np.clip(out, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.asarray(out, dtype=float)


# ------------------------------------------------------------ linear models


def _fit_glm(Xs, y, prob, info):
    if prob:
        return _fit_logistic(Xs, y, penalty=0.0, info=info)
    ybar = y.mean()
    Xc = Xs - Xs.mean(axis=0)
    coef, *_ = np.linalg.lstsq(Xc, y - ybar, rcond=None)
    return {"b0": float(ybar - Xs.mean(axis=0) @ coef), "coef": coef}


def _fit_ridge(Xs, y, penalty):
    xm = Xs.mean(axis=0)
    Xc = Xs - xm
    q = Xs.shape[1]
    A = Xc.T @ Xc + penalty * np.eye(q)
    coef = np.linalg.solve(A, Xc.T @ (y - y.mean()))
    return {"b0": float(y.mean() - xm @ coef), "coef": coef}


def _irls(A, y, penalty, tol, max_iter):
    """Newton-Raphson for (optionally ridge-penalised) logistic regression.

    ``A`` includes the intercept column (never penalised). Converged when the
    relative change in penalised deviance falls below ``tol`` and the Newton
    step is negligible (quadratic convergence makes the extra step cheap).
    """
    n, k = A.shape
    pen = np.full(k, penalty)
    pen[0] = 0.0
    beta = np.zeros(k)
    ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
    beta[0] = math.log(ybar / (1 - ybar))

    def objective(b):
        eta = A @ b
        # log(1 + exp(eta)) - y * eta, computed stably
        ll = np.logaddexp(0.0, eta) - y * eta
        return 2.0 * ll.sum() + np.sum(pen * b * b)

    dev = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pr = expit(A @ beta)
        w = pr * (1 - pr)
        H = (A * w[:, None]).T @ A + np.diag(pen)
        g = A.T @ (y - pr) - pen * beta
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        new_dev = objective(beta + step)
        while not new_dev <= dev + 1e-12 * abs(dev) and t > 1e-10:
            t *= 0.5
            new_dev = objective(beta + t * step)
        beta = beta + t * step
        change = abs(new_dev - dev) / (abs(new_dev) + 0.1)
        dev = new_dev
        if change < tol and np.max(np.abs(t * step)) < 1e-9 * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    return beta, dev, converged, it


def _fit_logistic(Xs, y, penalty, info, tol=1e-8, max_iter=50):
    """Logistic regression by IRLS, with a tiny ridge fallback under separation."""
    n = Xs.shape[0]
    A = np.column_stack([np.ones(n), Xs])
    beta, dev, conv, it = _irls(A, y, penalty, tol, max_iter)
    separated = (not conv) or (penalty == 0.0 and (dev / n < 1e-6 or np.max(np.abs(beta[1:]), initial=0) > 30))
    if penalty == 0.0 and separated:
        info["separation"] = True
        beta, dev, conv, it = _irls(A, y, 1e-4, tol, max_iter)
    info.update(converged=conv, iterations=it)
    return {"b0": float(beta[0]), "coef": beta[1:]}


def _lambda_path(Xs, y, alpha, n_lambda, ratio):
    n, q = Xs.shape
    lmax = np.max(np.abs(Xs.T @ (y - y.mean()))) / n / max(alpha, 1e-3)
    if not lmax > 0:
        lmax = 1.0
    if ratio is None:
        ratio = 1e-4 if n > q else 1e-2
    if n_lambda == 1:
        return np.array([lmax])
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * ratio), n_lambda))


def _enet_solve(XF, y, prob, lam, alpha, beta, b0, tol):
    if prob:
        b0, _, _ = _kernels.enet_logistic(XF, y, lam, alpha, beta, b0, tol, 1e-8, 100, 100000)
    else:
        w = np.full(y.size, 1.0 / y.size)
        b0, _ = _kernels.enet_cd(XF, y, w, lam, alpha, beta, b0, tol, 100000)
    return b0


def _path_fit(XF, y, prob, lambdas, alpha, tol, stop_at=None, early_stop=False):
    """Warm-started solutions along ``lambdas``.

    With ``early_stop`` the path ends once the fraction of deviance explained
    exceeds 0.999 (0.99 for probabilities, where the tail approaches separation)
    or improves by less than 1e-5 between consecutive values.
    """
    q = XF.shape[1]
    beta = np.zeros(q)
    ybar = y.mean()
    b0 = math.log(ybar / (1 - ybar)) if prob else ybar
    null_dev = _loss(y, np.full(y.size, b0), prob)
    prev_ratio = 0.0
    dev_max = 0.99 if prob else 0.999
    out = []
    for i, lam in enumerate(lambdas):
        b0 = _enet_solve(XF, y, prob, float(lam), alpha, beta, b0, tol)
        out.append((b0, beta.copy()))
        if stop_at is not None and i >= stop_at:
            break
        if early_stop and null_dev > 0:
            ratio = 1.0 - _loss(y, b0 + XF @ beta, prob) / null_dev
            if ratio > dev_max or (i > 0 and ratio - prev_ratio < 1e-5):
                break
            prev_ratio = ratio
    return out


def _loss(y, eta, prob):
    if prob:
        pr = np.clip(expit(eta), PROB_CLAMP, 1 - PROB_CLAMP)
        return float(-2.0 * np.mean(y * np.log(pr) + (1 - y) * np.log(1 - pr)))
    return float(np.mean((y - eta) ** 2))


def _fit_enet(Xs, y, p, prob, rng, info):
    alpha, tol = float(p["alpha"]), float(p["tol"])
    XF = np.asfortranarray(Xs)
    if p["lam"] is not None:
        lambdas = np.array([float(p["lam"])])
        b0, beta = _path_fit(XF, y, prob, lambdas, alpha, tol)[-1]
        info["lambda"] = float(p["lam"])
        return {"b0": float(b0), "coef": beta}
    lambdas = _lambda_path(Xs, y, alpha, int(p["n_lambda"]), p["lambda_min_ratio"])
    full_path = _path_fit(XF, y, prob, lambdas, alpha, tol, early_stop=True)
    lambdas = lambdas[: len(full_path)]
    V = int(p["cv_folds"])
    n = y.size
    strata = y if prob else np.zeros(n)
    smallest = int(min(y.sum(), n - y.sum())) if prob else n
    V = max(2, min(V, smallest))
    folds = stratified_assignment(strata, V, rng.gen)
    cv_loss = np.zeros(lambdas.size)
    for v in range(V):
        tr, te = folds != v, folds == v
        ytr = y[tr]
        if prob and ytr.min() == ytr.max():
            continue
        path = _path_fit(np.asfortranarray(XF[tr]), ytr, prob, lambdas, alpha, tol)
        for i, (b0, beta) in enumerate(path):
            cv_loss[i] += _loss(y[te], b0 + Xs[te] @ beta, prob) * te.sum()
    best = int(np.argmin(cv_loss))
    b0, beta = full_path[best]
    info.update(lambda_=float(lambdas[best]), lambda_index=best, path_length=int(lambdas.size))
    return {"b0": float(b0), "coef": beta}


# -------------------------------------------------------------------- trees


def _binary_columns(Xe):
    return np.all((Xe == 0) | (Xe == 1), axis=0)


def _fit_forest(Xe, y, p):
    n, q = Xe.shape
    depth = -1 if p["max_depth"] is None else int(p["max_depth"])
    mtry = int(p["mtry"]) if p["mtry"] is not None else max(1, int(math.floor(math.sqrt(q))))
    mtry = min(mtry, q)
    # a depth-0 forest is a single root; bootstrapping would only perturb its mean
    bootstrap = depth != 0
    trees = _kernels.grow_forest(Xe, _binary_columns(Xe), y, int(p["n_trees"]), depth, int(p["min_leaf"]), mtry, bootstrap)
    return {"trees": trees}


def _fit_boosting(Xe, y, p, prob):
    *trees, f0 = _kernels.grow_boosting(Xe, _binary_columns(Xe), y, int(p["n_rounds"]), float(p["rate"]),
                                        int(p["max_depth"]), int(p["min_leaf"]), prob)
    return {"trees": tuple(trees), "f0": float(f0), "rate": float(p["rate"]), "logistic": prob}

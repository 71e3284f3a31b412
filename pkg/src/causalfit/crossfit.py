"""Nuisance estimation with or without K-fold cross-fitting, and effect estimation on top of it."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, FoldPlan, RngStream, ValidationError, make_folds
from .estimators import (
    EffectEstimate,
    EstimationError,
    NuisancePredictions,
    aipw_estimate,
    gcomp_estimate,
    tmle_estimate,
    truncate_propensity,
)
from .learners import DesignMatrix, base_design
from .superlearner import Library, SlFit, fit_super_learner, sl_predict

__all__ = [
    "EstimatorConfig",
    "NuisanceFit",
    "crossfit_nuisances",
    "fit_nuisances",
    "estimate_effect",
    "estimate_effects",
]

METHODS = ("AIPW", "TMLE", "GCOMP")


@dataclass(frozen=True)
class EstimatorConfig:
    """How to estimate: method, learner libraries, cross-fitting and truncation.

    ``crossfit`` is ``None`` for no cross-fitting or the fold count ``K >= 2``.
    ``outcome_library`` / ``exposure_library`` override ``library`` for one
    nuisance model (used e.g. to misspecify a model on purpose).
    """

    method: str = "TMLE"
    library: Library = field(default_factory=Library.reduced)
    crossfit: int | None = None
    sl_folds: int = 10
    truncation: tuple[float, float] | None = (5.0, 95.0)
    seed: int = 0
    outcome_library: Library | None = None
    exposure_library: Library | None = None

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", method)
        for key in ("library", "outcome_library", "exposure_library"):
            value = getattr(self, key)
            if value is not None and not isinstance(value, Library):
                try:
                    object.__setattr__(self, key, Library.from_config(value))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValidationError(f"invalid {key}: {exc}") from exc
        if self.crossfit is not None:
            if isinstance(self.crossfit, bool) or int(self.crossfit) != self.crossfit:
                raise ValidationError("crossfit must be null or an integer K >= 2")
            if self.crossfit < 2:
                raise ValidationError(f"K >= 2 folds required for cross-fitting, got K={self.crossfit}")
            object.__setattr__(self, "crossfit", int(self.crossfit))
        if int(self.sl_folds) < 2:
            raise ValidationError("Super Learner needs V >= 2 folds")
        if self.truncation is not None:
            lo, hi = (float(v) for v in self.truncation)
            if not 0 <= lo < hi <= 100:
                raise ValidationError("truncation percentiles must satisfy 0 <= lower < upper <= 100")
            object.__setattr__(self, "truncation", (lo, hi))
        if int(self.seed) < 0:
            raise ValidationError("seed must be non-negative")

    @property
    def outcome_lib(self) -> Library:
        return self.outcome_library or self.library

    @property
    def exposure_lib(self) -> Library:
        return self.exposure_library or self.library

    @property
    def label(self) -> str:
        if self.outcome_library is None and self.exposure_library is None:
            return self.library.label
        return f"Q:{self.outcome_lib.label}|g:{self.exposure_lib.label}"

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimatorConfig":
        d = dict(d)
        known = {"method", "library", "crossfit", "sl_folds", "truncation", "seed",
                 "outcome_library", "exposure_library"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown estimator config keys: {sorted(unknown)}")
        try:
            kw = {}
            for key in ("library", "outcome_library", "exposure_library"):
                if d.get(key) is not None:
                    kw[key] = Library.from_config(d[key])
            cf = d.get("crossfit")
            if isinstance(cf, str):
                cf = None if cf.lower() in ("none", "no", "") else int(cf)
            trunc = d.get("truncation", (5.0, 95.0))
            return cls(
                method=d.get("method", "TMLE"),
                crossfit=cf,
                sl_folds=int(d.get("sl_folds", 10)),
                truncation=None if trunc is None else tuple(trunc),
                seed=int(d.get("seed", 0)),
                **kw,
            )
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"invalid estimator config: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"invalid estimator config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "EstimatorConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise ValidationError(f"file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"estimator config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "library": self.library.to_dict(),
            "crossfit": self.crossfit,
            "sl_folds": self.sl_folds,
            "truncation": None if self.truncation is None else list(self.truncation),
            "seed": self.seed,
        }
        if self.outcome_library is not None:
            d["outcome_library"] = self.outcome_library.to_dict()
        if self.exposure_library is not None:
            d["exposure_library"] = self.exposure_library.to_dict()
        return d


@dataclass
class NuisanceFit:
    """Untruncated nuisance predictions plus the Super Learner fits that made them."""

    predictions: NuisancePredictions
    outcome_fits: list[SlFit]
    exposure_fits: list[SlFit]
    folds: FoldPlan | None

    @property
    def K(self) -> int | None:
        return None if self.folds is None else self.folds.K

    def weights(self, which: str) -> list[dict]:
        fits = self.outcome_fits if which == "outcome" else self.exposure_fits
        return [dict(zip(f.labels, (round(float(w), 10) for w in f.weights))) for f in fits]

    def max_excess_risk(self) -> float:
        return max(f.excess_risk for f in self.outcome_fits + self.exposure_fits)


def _designs(data: Dataset):
    """Outcome design (exposure first, then confounders) and exposure design."""
    q = base_design(data.W, data.w_names, data.continuous, X=data.X, exposure_name=data.exposure_name)
    g = base_design(data.W, data.w_names, data.continuous)
    return q, g


def _fit_fold(data: Dataset, qd: DesignMatrix, gd: DesignMatrix, train, config: EstimatorConfig,
              rng_q: RngStream, rng_g: RngStream):
    X, Y = data.X[train], data.Y[train]
    q_fit = fit_super_learner(config.outcome_lib, qd.rows(train), Y, config.sl_folds, rng_q,
                              "regression", strata=X)
    g_fit = fit_super_learner(config.exposure_lib, gd.rows(train), X, config.sl_folds, rng_g,
                              "probability")
    return q_fit, g_fit


def _predict_fold(q_fit, g_fit, qd: DesignMatrix, gd: DesignMatrix, rows, name: str):
    q_rows = qd.rows(rows)
    e1 = sl_predict(q_fit, q_rows.with_column(name, 1.0))
    e0 = sl_predict(q_fit, q_rows.with_column(name, 0.0))
    ps = sl_predict(g_fit, gd.rows(rows))
    return e1, e0, ps


def fit_nuisances(data: Dataset, config: EstimatorConfig, rng: RngStream | None = None) -> NuisanceFit:
    """Nuisance predictions for every record, cross-fitted if ``config.crossfit`` is set."""
    rng = rng if rng is not None else RngStream(config.seed)
    if config.crossfit is not None:
        return crossfit_nuisances(data, config, config.crossfit, rng)
    qd, gd = _designs(data)
    everyone = np.arange(data.n)
    q_fit, g_fit = _fit_fold(data, qd, gd, everyone, config, rng.child(1, 0), rng.child(2, 0))
    e1, e0, ps = _predict_fold(q_fit, g_fit, qd, gd, everyone, data.exposure_name)
    nuis = NuisancePredictions(e1, e0, ps, provenance={"crossfit": None})
    return NuisanceFit(nuis, [q_fit], [g_fit], None)


def crossfit_nuisances(data: Dataset, config: EstimatorConfig | Library, K: int,
                       rng: RngStream, folds: FoldPlan | None = None) -> NuisanceFit:
    """Out-of-fold nuisance predictions: fold ``k`` is predicted by fits on its complement.

    ``config`` may be a bare :class:`Library` (used for both nuisance models).
    Folds are exposure-stratified and drawn from ``rng.child(0)`` unless given.
    """
    if isinstance(config, Library):
        config = EstimatorConfig(library=config, crossfit=K)
    if folds is None:
        folds = make_folds(data.n, data.X, K, rng.child(0))
    elif folds.K != K or folds.n != data.n:
        raise ValidationError("fold plan does not match K or the number of records")
    qd, gd = _designs(data)
    E1, E0, PS = np.empty(data.n), np.empty(data.n), np.empty(data.n)
    filled = np.zeros(data.n, dtype=int)
    q_fits, g_fits = [], []
    for k in range(K):
        test, train = folds.test_index(k), folds.train_index(k)
        try:
            q_fit, g_fit = _fit_fold(data, qd, gd, train, config, rng.child(1, k), rng.child(2, k))
        except (ValueError, RuntimeError) as exc:
            raise type(exc)(f"fold {k}: {exc}") from exc
        E1[test], E0[test], PS[test] = _predict_fold(q_fit, g_fit, qd, gd, test, data.exposure_name)
        filled[test] += 1
        q_fits.append(q_fit)
        g_fits.append(g_fit)
    assert np.all(filled == 1), "fold plan is not a partition"
    prov = {"crossfit": K, "assignment": folds.assignment.tolist()}
    return NuisanceFit(NuisancePredictions(E1, E0, PS, provenance=prov), q_fits, g_fits, folds)


def _truncated(nf: NuisanceFit, config: EstimatorConfig) -> NuisancePredictions:
    p = nf.predictions
    if config.truncation is None:
        return p
    ps, bounds = truncate_propensity(p.PS, *config.truncation)
    return NuisancePredictions(p.E1, p.E0, ps, provenance=p.provenance, truncation=bounds)


def _estimate(method: str, data: Dataset, nuis: NuisancePredictions) -> EffectEstimate:
    if method == "AIPW":
        return aipw_estimate(data.X, data.Y, nuis)
    if method == "TMLE":
        return tmle_estimate(data.X, data.Y, nuis)
    est = gcomp_estimate(nuis.E1, nuis.E0)
    est.truncation_bounds = nuis.truncation
    return est


def _risks(fit) -> list:
    return [float(r) if math.isfinite(r) else None for r in fit.cv_risk]


def estimate_effects(data: Dataset, config: EstimatorConfig, methods: Sequence[str] | None = None,
                     rng: RngStream | None = None, nuisances: NuisanceFit | None = None
                     ) -> dict[str, EffectEstimate]:
    """Several estimators sharing one nuisance fit (and one truncated propensity vector)."""
    methods = [m.upper() for m in (methods or [config.method])]
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")
    nf = nuisances if nuisances is not None else fit_nuisances(data, config, rng)
    nuis = _truncated(nf, config)
    w_q, w_g = nf.weights("outcome"), nf.weights("exposure")
    out = {}
    for m in methods:
        est = _estimate(m, data, nuis)
        est.K = nf.K
        est.sl_weights_outcome = w_q[0] if nf.K is None else w_q
        est.sl_weights_exposure = w_g[0] if nf.K is None else w_g
        est.diagnostics["sl_max_excess_risk"] = nf.max_excess_risk()
        est.diagnostics["sl_cv_risk_outcome"] = [_risks(f) for f in nf.outcome_fits]
        est.diagnostics["sl_cv_risk_exposure"] = [_risks(f) for f in nf.exposure_fits]
        if not math.isfinite(est.psi) or (est.se is not None and not math.isfinite(est.se)):
            est.flags.append("nonfinite")
        out[m] = est
    return out


def estimate_effect(data: Dataset, config: EstimatorConfig, rng: RngStream | None = None) -> EffectEstimate:
    """Estimate the average causal effect of ``X`` on ``Y`` as configured.

    Assumes no unmeasured confounding given ``W``, consistency and positivity.
    Raises :class:`~causalfit.estimators.EstimationError` if targeting fails.
    """
    return estimate_effects(data, config, [config.method], rng)[config.method]


__all__ += ["EstimationError", "METHODS"]

"""Doubly robust estimators of the average causal effect.

All functions assume exchangeability given W, consistency and positivity; the
nuisance predictions passed in are taken as given.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

__all__ = [
    "EstimationError",
    "NuisancePredictions",
    "TargetingResult",
    "EffectEstimate",
    "truncate_propensity",
    "gcomp_estimate",
    "aipw_estimate",
    "aipw_contributions",
    "tmle_target",
    "tmle_estimate",
    "wald_ci",
    "Z_975",
]

Z_975 = 1.959964
TMLE_BOUND = 0.005


class EstimationError(RuntimeError):
    """The estimator could not produce an estimate (e.g. targeting did not converge)."""


@dataclass(frozen=True)
class NuisancePredictions:
    """Per-record predicted outcomes under exposure (``E1``) and no exposure (``E0``), and propensity ``PS``."""

    E1: np.ndarray
    E0: np.ndarray
    PS: np.ndarray
    provenance: dict = field(default_factory=lambda: {"crossfit": None})
    truncation: tuple[float, float] | None = None

    def __post_init__(self):
        E1, E0, PS = (np.asarray(a, dtype=float).ravel() for a in (self.E1, self.E0, self.PS))
        if not (E1.size == E0.size == PS.size):
            raise ValueError("nuisance vectors must have equal length")
        for name, a in (("E1", E1), ("E0", E0), ("PS", PS)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entry in {name}")
        if np.any(PS <= 0) or np.any(PS >= 1):
            raise ValueError("propensity scores must lie strictly inside (0, 1)")
        object.__setattr__(self, "E1", E1)
        object.__setattr__(self, "E0", E0)
        object.__setattr__(self, "PS", PS)

    @property
    def n(self) -> int:
        return self.E1.size


@dataclass(frozen=True)
class TargetingResult:
    epsilon: float
    bounds: tuple[float, float]
    E1star: np.ndarray
    E0star: np.ndarray
    iterations: int
    score: float


@dataclass
class EffectEstimate:
    method: str
    psi: float
    se: float | None
    ci: tuple[float, float] | None
    n: int
    K: int | None = None
    truncation_bounds: tuple[float, float] | None = None
    sl_weights_outcome: Any = None
    sl_weights_exposure: Any = None
    flags: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, diagnostics: bool = False) -> dict:
        d = {
            "method": self.method,
            "psi": _num(self.psi),
            "se": _num(self.se),
            "ci": None if self.ci is None else [_num(self.ci[0]), _num(self.ci[1])],
            "n": self.n,
            "K": self.K,
            "truncation_bounds": None if self.truncation_bounds is None else [float(b) for b in self.truncation_bounds],
            "sl_weights_outcome": self.sl_weights_outcome,
            "sl_weights_exposure": self.sl_weights_exposure,
            "flags": list(self.flags),
        }
        if diagnostics:
            d["diagnostics"] = self.diagnostics
        return d


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def truncate_propensity(PS, lower_pct: float = 5, upper_pct: float = 95):
    """Clamp propensity scores into their empirical ``[lower_pct, upper_pct]`` percentiles.

    Percentiles use linear interpolation between order statistics (type 7).
    Returns ``(truncated, (low, high))``.
    """
    ps = np.asarray(PS, dtype=float).ravel()
    if not np.all(np.isfinite(ps)):
        raise ValueError("non-finite propensity score")
    if not lower_pct < upper_pct:
        raise ValueError("lower percentile must be below upper percentile")
    lo, hi = np.percentile(ps, [lower_pct, upper_pct])
    return np.clip(ps, lo, hi), (float(lo), float(hi))


def wald_ci(psi: float, se: float, level: float = 0.95) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ValueError("confidence level must lie strictly between 0 and 1")
    if se < 0:
        raise ValueError("standard error must be non-negative")
    z = Z_975 if level == 0.95 else float(norm.ppf((1 + level) / 2))
    return (psi - z * se, psi + z * se)


def gcomp_estimate(E1, E0) -> EffectEstimate:
    """Plug-in g-formula: mean of predicted outcome differences (no standard error)."""
    E1 = np.asarray(E1, dtype=float).ravel()
    E0 = np.asarray(E0, dtype=float).ravel()
    if E1.size == 0:
        raise ValueError("empty input")
    if E1.size != E0.size:
        raise ValueError("E1 and E0 lengths differ")
    return EffectEstimate("GCOMP", float(np.mean(E1 - E0)), None, None, E1.size)


def aipw_contributions(X, Y, E1, E0, PS) -> np.ndarray:
    """Per-record efficient influence function terms (uncentred)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return E1 - E0 + X * (Y - E1) / PS - (1 - X) * (Y - E0) / (1 - PS)


def _eif_se(phi: np.ndarray, psi: float) -> float:
    n = phi.size
    var = float(np.sum((phi - psi) ** 2) / (n - 1))
    return math.sqrt(var / n)


def aipw_estimate(X, Y, nuis: NuisancePredictions) -> EffectEstimate:
    """Augmented IPW estimate with influence-function standard error."""
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.size
    if n < 2:
        raise ValueError("need at least 2 records")
    if nuis.n != n or Y.size != n:
        raise ValueError("data and nuisance lengths differ")
    phi = aipw_contributions(X, Y, nuis.E1, nuis.E0, nuis.PS)
    psi = float(phi.mean())
    se = _eif_se(phi, psi)
    return EffectEstimate("AIPW", psi, se, wald_ci(psi, se), n, truncation_bounds=nuis.truncation,
                          diagnostics={"eif_mean_centered": float(np.mean(phi - psi))})


def _fit_epsilon(ys, offset, H, max_iter=100, tol=1e-12):
    """One-parameter logistic MLE (fractional response) of ``ys`` on ``H`` with offset.

    Safeguarded Newton-Raphson; raises :class:`EstimationError` if not converged.
    """

    def loglik(e):
        eta = offset + e * H
        return float(np.sum(ys * eta - np.logaddexp(0.0, eta)))

    eps, ll = 0.0, loglik(0.0)
    for it in range(1, max_iter + 1):
        p = expit(offset + eps * H)
        score = float(np.sum(H * (ys - p)))
        info = float(np.sum(H * H * p * (1 - p)))
        if info <= 0:
            return eps, it, score
        step = score / info
        t = 1.0
        new = loglik(eps + step)
        while new < ll - 1e-12 * abs(ll) and t > 1e-12:
            t *= 0.5
            new = loglik(eps + t * step)
        eps += t * step
        ll = new
        if abs(t * step) < tol * max(1.0, abs(eps)):
            p = expit(offset + eps * H)
            return eps, it, float(np.sum(H * (ys - p)))
    raise EstimationError(f"TMLE targeting did not converge in {max_iter} iterations")


def tmle_target(X, Y, nuis: NuisancePredictions) -> TargetingResult:
    """Logistic fluctuation of min-max scaled initial predictions along the clever covariate."""
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    a, b = float(Y.min()), float(Y.max())
    if not b > a:
        raise ValueError("outcome is constant; cannot scale for targeting")
    span = b - a
    ys = (Y - a) / span
    q1 = np.clip((nuis.E1 - a) / span, TMLE_BOUND, 1 - TMLE_BOUND)
    q0 = np.clip((nuis.E0 - a) / span, TMLE_BOUND, 1 - TMLE_BOUND)
    ps = nuis.PS
    H1, H0 = 1.0 / ps, -1.0 / (1.0 - ps)
    H = np.where(X == 1, H1, H0)
    offset = logit(np.where(X == 1, q1, q0))
    eps, it, score = _fit_epsilon(ys, offset, H)
    E1s = a + span * expit(logit(q1) + eps * H1)
    E0s = a + span * expit(logit(q0) + eps * H0)
    return TargetingResult(float(eps), (a, b), E1s, E0s, it, score)


def tmle_estimate(X, Y, nuis: NuisancePredictions) -> EffectEstimate:
    """Targeted substitution estimate with influence-function standard error."""
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.size
    if n < 2:
        raise ValueError("need at least 2 records")
    tr = tmle_target(X, Y, nuis)
    psi = float(np.mean(tr.E1star) - np.mean(tr.E0star))
    phi = aipw_contributions(X, Y, tr.E1star, tr.E0star, nuis.PS)
    se = _eif_se(phi, psi)
    diag = {
        "epsilon": tr.epsilon,
        "eif_mean_centered": float(np.mean(phi - psi)),
        "targeted_means": [float(np.mean(tr.E1star)), float(np.mean(tr.E0star))],
        "outcome_range": [tr.bounds[0], tr.bounds[1]],
        "iterations": tr.iterations,
    }
    return EffectEstimate("TMLE", psi, se, wald_ci(psi, se), n, truncation_bounds=nuis.truncation,
                          diagnostics=diag)

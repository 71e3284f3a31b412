"""Parametric data-generating mechanisms, their true effect, and power-targeted calibration.

A mechanism generates, in order: background confounders (each a Bernoulli,
categorical-logit or Gaussian-linear model in earlier columns), an optional
block of correlated metabolite-like variables driven by latent factors,
a logistic exposure and a Gaussian outcome. Exposure and outcome terms act on
standardised confounders ``z = (w - mean) / sd`` using constants stored in the
mechanism, so every coefficient is on a comparable scale.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset, RngStream, ValidationError
from .estimators import aipw_estimate, NuisancePredictions, truncate_propensity
from .learners import base_design
from .superlearner import Library, fit_super_learner, sl_predict

__all__ = [
    "DgmSpec",
    "TruthRecord",
    "CalibrationResult",
    "load_spec",
    "shipped_specs",
    "generate",
    "true_ace",
    "calibrate_effect",
    "implied_metabolite_correlation",
]

SHIPPED = ("simple-1", "complex-1a", "complex-1b", "simple-2", "complex-2")


@dataclass(frozen=True)
class DgmSpec:
    """A data-generating mechanism; thin validated wrapper over its JSON document."""

    doc: Mapping[str, Any]

    def __post_init__(self):
        d = self.doc
        for key in ("name", "variables", "standardization", "exposure", "outcome"):
            if key not in d:
                raise ValidationError(f"mechanism missing '{key}'")
        seen: set[str] = set()
        for v in d["variables"]:
            refs = set(v.get("coef", {}))
            if v["type"] == "categorical":
                refs = set().union(*(set(c) for c in v.get("coef", {}).values())) if v.get("coef") else set()
            unknown = refs - seen
            if unknown:
                raise ValidationError(f"variable {v['name']!r} depends on later or unknown columns {sorted(unknown)}")
            seen.update(_columns_of(v))
        if d.get("metabolites"):
            for drv in d["metabolites"]["drivers"]:
                if drv["column"] not in seen:
                    raise ValidationError(f"factor driver {drv['column']!r} is not a background column")
            seen.update(_metabolite_names(d["metabolites"]))
        for part in ("exposure", "outcome"):
            m = d[part]
            used = set(m.get("main", {})) | set(m.get("squares", {})) | set(m.get("exposure_interactions", {}))
            used |= {c for a, b, _ in m.get("interactions", []) for c in (a, b)}
            unknown = used - seen
            if unknown:
                raise ValidationError(f"{part} model refers to unknown columns {sorted(unknown)}")

    # ---------------------------------------------------------------- access
    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def multiplier(self) -> float:
        return float(self.doc.get("interaction_multiplier", 1.0))

    @property
    def columns(self) -> tuple[str, ...]:
        cols = [c for v in self.doc["variables"] for c in _columns_of(v)]
        if self.doc.get("metabolites"):
            cols += _metabolite_names(self.doc["metabolites"])
        return tuple(cols)

    @property
    def continuous(self) -> tuple[bool, ...]:
        flags = [v["type"] == "gaussian" for v in self.doc["variables"] for _ in _columns_of(v)]
        if self.doc.get("metabolites"):
            flags += [True] * self.doc["metabolites"]["count"]
        return tuple(flags)

    @property
    def p(self) -> int:
        """Number of confounders (a categorical variable counts once)."""
        k = len(self.doc["variables"])
        return k + (self.doc["metabolites"]["count"] if self.doc.get("metabolites") else 0)

    @property
    def is_simple(self) -> bool:
        m = self.doc["outcome"]
        return not m.get("exposure_interactions")

    def beta(self, n: int | None = None) -> float:
        """Exposure main effect for sample size ``n`` from the calibration table.

        Sizes not in the table scale the nearest calibrated value by
        ``sqrt(n0 / n)`` (constant power for a root-n consistent estimator).
        """
        table = {int(k): float(v) for k, v in self.doc.get("effect", {}).items()}
        if not table:
            return float(self.doc.get("default_beta", 0.0))
        if n is None:
            return float(self.doc.get("default_beta", table[min(table)]))
        if n in table:
            return table[n]
        n0 = min(table, key=lambda k: abs(math.log(k / n)))
        return table[n0] * math.sqrt(n0 / n)

    def with_beta_table(self, table: Mapping[int, float]) -> "DgmSpec":
        doc = json.loads(json.dumps(self.doc))
        doc["effect"] = {str(k): float(v) for k, v in sorted(table.items())}
        return DgmSpec(doc)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.doc))

    def hash(self) -> str:
        blob = json.dumps(self.doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_json(cls, path) -> "DgmSpec":
        try:
            return cls(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise ValidationError(f"file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"mechanism is not valid JSON: {exc}") from exc


def _columns_of(v: Mapping) -> list[str]:
    if v["type"] == "categorical":
        return [f"{v['name']}={lev}" for lev in v["levels"][1:]]
    return [v["name"]]


def _metabolite_names(m: Mapping) -> list[str]:
    return [f"{m.get('prefix', 'met')}{j + 1:02d}" for j in range(m["count"])]


def shipped_specs() -> tuple[str, ...]:
    return SHIPPED


def load_spec(name_or_path) -> DgmSpec:
    """Load a shipped mechanism by name (e.g. ``"simple-1"``) or a JSON file path."""
    if isinstance(name_or_path, DgmSpec):
        return name_or_path
    if isinstance(name_or_path, Mapping):
        return DgmSpec(dict(name_or_path))
    s = str(name_or_path)
    if s in SHIPPED:
        text = resources.files("causalfit.specs").joinpath(f"{s}.json").read_text()
        return DgmSpec(json.loads(text))
    return DgmSpec.from_json(s)


# ------------------------------------------------------------------ generation


def _background(spec: DgmSpec, n: int, rng: RngStream) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    for j, v in enumerate(spec.doc["variables"]):
        g = rng.child(j).gen
        kind = v["type"]
        if kind == "categorical":
            levels = v["levels"]
            eta = np.zeros((n, len(levels)))
            for i, lev in enumerate(levels):
                eta[:, i] = v["intercepts"][i]
                for c, b in v.get("coef", {}).get(lev, {}).items():
                    eta[:, i] += b * cols[c]
            eta -= eta.max(axis=1, keepdims=True)
            pr = np.exp(eta)
            cum = np.cumsum(pr / pr.sum(axis=1, keepdims=True), axis=1)
            u = g.random(n)[:, None]
            draw = np.minimum((u > cum).sum(axis=1), len(levels) - 1)
            for i, lev in enumerate(levels[1:], start=1):
                cols[f"{v['name']}={lev}"] = (draw == i).astype(float)
            continue
        lin = np.full(n, float(v["intercept"]))
        for c, b in v.get("coef", {}).items():
            lin += b * cols[c]
        if kind == "bernoulli":
            cols[v["name"]] = (g.random(n) < expit(lin)).astype(float)
        elif kind == "gaussian":
            cols[v["name"]] = lin + v["sd"] * g.standard_normal(n)
        else:
            raise ValidationError(f"unknown variable type {kind!r}")
    return cols


def _metabolites(spec: DgmSpec, cols: dict[str, np.ndarray], n: int, rng: RngStream) -> None:
    m = spec.doc.get("metabolites")
    if not m:
        return
    std = spec.doc["standardization"]
    k = m["factors"]
    g = rng.child(len(spec.doc["variables"])).gen
    F = g.standard_normal((n, k))
    for f, drv in enumerate(m["drivers"]):
        mu, sd = std[drv["column"]]
        gam = drv["coef"]
        F[:, f] = gam * (cols[drv["column"]] - mu) / sd + math.sqrt(1 - gam * gam) * F[:, f]
    L = np.asarray(m["loadings"], dtype=float)
    U = np.sqrt(np.asarray(m["uniqueness"], dtype=float))
    E = g.standard_normal((n, m["count"]))
    M = F @ L.T + E * U
    for j, name in enumerate(_metabolite_names(m)):
        cols[name] = M[:, j]


def _confounders(spec: DgmSpec, n: int, rng: RngStream) -> dict[str, np.ndarray]:
    cols = _background(spec, n, rng)
    _metabolites(spec, cols, n, rng)
    return cols


def _z(spec: DgmSpec, cols: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    mu, sd = spec.doc["standardization"][name]
    return (cols[name] - mu) / sd


def _confounder_terms(spec: DgmSpec, model: Mapping, cols) -> np.ndarray:
    n = next(iter(cols.values())).size
    out = np.full(n, float(model.get("intercept", 0.0)))
    for c, b in model.get("main", {}).items():
        out += b * _z(spec, cols, c)
    for c, b in model.get("squares", {}).items():
        out += b * _z(spec, cols, c) ** 2
    m = spec.multiplier
    for a, c, b in model.get("interactions", []):
        out += m * b * _z(spec, cols, a) * _z(spec, cols, c)
    return out


def _modification(spec: DgmSpec, cols) -> np.ndarray:
    """Per-record change in the outcome mean from exposure-confounder interactions."""
    n = next(iter(cols.values())).size
    out = np.zeros(n)
    for c, b in spec.doc["outcome"].get("exposure_interactions", {}).items():
        out += spec.multiplier * b * _z(spec, cols, c)
    return out


def _outcome_intercept(spec: DgmSpec, beta: float) -> float:
    """Intercept keeping the marginal outcome mean at zero for this ``beta``."""
    return float(spec.doc["outcome"].get("intercept", 0.0)) - beta * float(spec.doc.get("prevalence", 0.25))


def generate(spec: DgmSpec | str, n: int, rng: RngStream, beta: float | None = None) -> Dataset:
    """Draw ``n`` records. Confounders, exposure and outcome use separate sub-streams,
    so confounder draws never depend on how exposure or outcome are generated.

    ``beta`` defaults to the calibrated value for ``n``.
    """
    spec = load_spec(spec)
    if n < 4:
        raise ValidationError("n >= 4 required")
    beta = spec.beta(n) if beta is None else float(beta)
    cols = _confounders(spec, n, rng.child(0))
    X = (rng.child(1).gen.random(n) < expit(_confounder_terms(spec, spec.doc["exposure"], cols))).astype(float)
    shift = _outcome_intercept(spec, beta) - float(spec.doc["outcome"].get("intercept", 0.0))
    mean = _confounder_terms(spec, spec.doc["outcome"], cols) + shift + X * (beta + _modification(spec, cols))
    Y = mean + spec.doc["outcome"]["noise_sd"] * rng.child(2).gen.standard_normal(n)
    W = np.column_stack([cols[c] for c in spec.columns])
    return Dataset(W, X, Y, spec.columns, spec.continuous)


def implied_metabolite_correlation(spec: DgmSpec | str) -> np.ndarray:
    """Metabolite correlation implied by the loadings (factors treated as independent, unit variance)."""
    spec = load_spec(spec)
    m = spec.doc.get("metabolites")
    if not m:
        raise ValidationError(f"{spec.name} has no metabolite block")
    L = np.asarray(m["loadings"], dtype=float)
    C = L @ L.T + np.diag(m["uniqueness"])
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


# ----------------------------------------------------------------------- truth


@dataclass(frozen=True)
class TruthRecord:
    spec: str
    psi: float
    N: int
    mcse: float
    beta: float
    spec_hash: str = ""

    def to_dict(self) -> dict:
        return {"spec": self.spec, "psi": self.psi, "N": self.N, "mcse": self.mcse,
                "beta": self.beta, "spec_hash": self.spec_hash}


def true_ace(spec: DgmSpec | str, N: int = 5_000_000, rng: RngStream | None = None,
             beta: float | None = None, n: int | None = None, chunk: int = 250_000) -> TruthRecord:
    """Average causal effect from the noiseless outcome mean over ``N`` confounder draws.

    ``beta`` defaults to the calibrated value for ``n`` (or the mechanism default).
    The per-record contrast is ``beta + (exposure-confounder terms)``; its mean is
    accumulated in chunks and its MC standard error is ``sd / sqrt(N)``.
    """
    spec = load_spec(spec)
    if N < 1_000_000:
        raise ValidationError("truth oracle needs N >= 1e6")
    rng = rng if rng is not None else RngStream(20240601)
    beta = spec.beta(n) if beta is None else float(beta)
    if spec.is_simple:
        return TruthRecord(spec.name, beta, int(N), 0.0, beta, spec.hash())
    total, total_sq, done, c = 0.0, 0.0, 0, 0
    while done < N:
        m = min(chunk, N - done)
        cols = _confounders(spec, m, rng.child(c))
        diff = _modification(spec, cols)
        total += float(diff.sum())
        total_sq += float(np.dot(diff, diff))
        done += m
        c += 1
    mean = total / N
    var = max(total_sq / N - mean * mean, 0.0) * N / (N - 1)
    return TruthRecord(spec.name, beta + mean, int(N), math.sqrt(var / N), beta, spec.hash())


# ----------------------------------------------------------------- calibration


@dataclass
class CalibrationResult:
    spec: str
    n: int
    beta: float
    power: float
    reps: int
    steps: int
    converged: bool
    history: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"spec": self.spec, "n": self.n, "beta": self.beta, "power": self.power,
                "reps": self.reps, "steps": self.steps, "converged": self.converged,
                "history": [[b, p] for b, p in self.history]}


class _ReferenceAnalysis:
    """AIPW without cross-fitting, reused across candidate effects.

    Common random numbers: replication ``r`` always uses the same confounders,
    exposure and noise, so only the outcome shift ``beta * X`` changes between
    candidates and the exposure model is fitted once per replication.
    """

    def __init__(self, spec: DgmSpec, n: int, reps: int, rng: RngStream, library: Library,
                 truncation=(5.0, 95.0)):
        self.spec, self.n, self.reps, self.rng = spec, n, reps, rng
        self.library, self.truncation = library, truncation
        self._base: list = [None] * reps

    def _replicate(self, r: int):
        if self._base[r] is None:
            data = generate(self.spec, self.n, self.rng.child(r), beta=0.0)
            gd = base_design(data.W, data.w_names, data.continuous)
            g_fit = fit_super_learner(self.library, gd, data.X, 10, self.rng.child(r, 2, 0), "probability")
            ps = sl_predict(g_fit, gd)
            if self.truncation is not None:
                ps, _ = truncate_propensity(ps, *self.truncation)
            self._base[r] = (data, ps)
        return self._base[r]

    def estimate(self, r: int, beta: float):
        data, ps = self._replicate(r)
        prev = float(self.spec.doc.get("prevalence", 0.25))
        Y = data.Y + beta * (data.X - prev)
        qd = base_design(data.W, data.w_names, data.continuous, X=data.X)
        q_fit = fit_super_learner(self.library, qd, Y, 10, self.rng.child(r, 1, 0), "regression",
                                  strata=data.X)
        e1 = sl_predict(q_fit, qd.with_column("X", 1.0))
        e0 = sl_predict(q_fit, qd.with_column("X", 0.0))
        return aipw_estimate(data.X, Y, NuisancePredictions(e1, e0, ps))

    def power(self, beta: float) -> tuple[float, float]:
        """Rejection rate of H0: ACE = 0 at the 5% level, and the median SE."""
        z = norm.ppf(0.975)
        hits, ses = 0, []
        for r in range(self.reps):
            est = self.estimate(r, beta)
            ses.append(est.se)
            hits += abs(est.psi) > z * est.se
        return hits / self.reps, float(np.median(ses))


def calibrate_effect(spec: DgmSpec | str, n: int, target_power: float = 0.8, reps: int = 200,
                     rng: RngStream | None = None, tol: float = 0.02, max_steps: int = 12,
                     library: Library | None = None) -> CalibrationResult:
    """Exposure main effect giving ``target_power`` for the reference analysis at size ``n``.

    The reference analysis is AIPW with the reduced library and no
    cross-fitting. A pilot at ``beta = 0`` gives the null rejection rate and a
    standard error; the upper bracket starts at the normal-approximation guess
    and doubles until its power exceeds the target. Bisection stops once the
    rejection rate is within ``tol`` of the target or after ``max_steps``.
    """
    spec = load_spec(spec)
    if not 0 < target_power < 1:
        raise ValidationError("target power must lie strictly between 0 and 1")
    if reps < 200:
        raise ValidationError("calibration needs reps >= 200")
    rng = rng if rng is not None else RngStream(7)
    ref = _ReferenceAnalysis(spec, n, reps, rng, library or Library.reduced())
    p0, se = ref.power(0.0)
    history = [(0.0, p0)]
    if p0 >= target_power:
        raise ValidationError(f"power at beta=0 is {p0:.3f}, not below the target; cannot bracket")
    lo, hi = 0.0, (norm.ppf(0.975) + norm.ppf(target_power)) * se
    steps = 0
    while True:
        p_hi, _ = ref.power(hi)
        history.append((hi, p_hi))
        steps += 1
        if abs(p_hi - target_power) <= tol:
            return CalibrationResult(spec.name, n, hi, p_hi, reps, steps, True, history)
        if p_hi > target_power or steps >= max_steps:
            break
        lo, hi = hi, 2 * hi
    best = min(history, key=lambda h: abs(h[1] - target_power))
    while steps < max_steps:
        mid = 0.5 * (lo + hi)
        p_mid, _ = ref.power(mid)
        history.append((mid, p_mid))
        steps += 1
        if abs(p_mid - target_power) <= tol:
            return CalibrationResult(spec.name, n, mid, p_mid, reps, steps, True, history)
        if p_mid < target_power:
            lo = mid
        else:
            hi = mid
        best = min(history, key=lambda h: abs(h[1] - target_power))
    warnings.warn(f"calibration for {spec.name} at n={n} did not reach +/-{tol} in {max_steps} steps",
                  RuntimeWarning, stacklevel=2)
    return CalibrationResult(spec.name, n, best[0], best[1], reps, steps, False, history)

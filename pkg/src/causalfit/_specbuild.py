"""Build the shipped mechanism files in ``causalfit/specs``.

Run ``python3 -m causalfit._specbuild`` to regenerate. Structural coefficients
are fixed below; intercepts, standardisation constants, exposure prevalence and
the outcome recentring are solved numerically on a large fixed-seed sample.
The effect table uses a normal-approximation pilot: ``beta(n) = (z_0.975 + z_0.8)``
times the empirical SD of AIPW estimates at ``beta = 0``; ``calibrate_effect``
refines it by simulation.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import norm

from . import dgm
from .crossfit import EstimatorConfig, estimate_effect
from .data import RngStream
from .learners import LearnerSpec
from .superlearner import Library

SOLVE_N = 400_000
SIZES = (200, 500, 1000, 2000)

# Background confounders modelled on an infant birth cohort: raw-unit linear
# predictors; intercepts are solved to hit the target mean / prevalence.
BACKGROUND = [
    {"name": "male", "type": "bernoulli", "target": 0.53, "coef": {}},
    {"name": "seifa", "type": "categorical", "levels": ["low", "med", "high"], "intercepts": [0.0, 0.0, 0.0]},
    {"name": "maternal_age", "type": "gaussian", "target": 32.3, "sd": 4.0,
     "coef": {"seifa=med": 0.5, "seifa=high": 1.2}},
    {"name": "bmi", "type": "gaussian", "target": 24.8, "sd": 4.6,
     "coef": {"seifa=high": -1.0, "maternal_age": 0.06}},
    {"name": "smoking", "type": "bernoulli", "target": 0.13,
     "coef": {"seifa=med": -0.4, "seifa=high": -0.9, "maternal_age": -0.06}},
    {"name": "gest_diabetes", "type": "bernoulli", "target": 0.044, "coef": {"bmi": 0.09, "maternal_age": 0.05}},
    {"name": "preeclampsia", "type": "bernoulli", "target": 0.036, "coef": {"bmi": 0.07}},
    {"name": "term_birth", "type": "bernoulli", "target": 0.95, "coef": {"preeclampsia": -1.2, "smoking": -0.5}},
    {"name": "vaginal_birth", "type": "bernoulli", "target": 0.62,
     "coef": {"bmi": -0.05, "maternal_age": -0.04, "term_birth": 0.8}},
    {"name": "birthweight", "type": "gaussian", "target": 3508.0, "sd": 470.0,
     "coef": {"male": 130.0, "smoking": -180.0, "term_birth": 450.0, "gest_diabetes": 120.0, "bmi": 8.0}},
    {"name": "wlz_12m", "type": "gaussian", "target": 0.72, "sd": 1.0,
     "coef": {"birthweight": 0.0006, "bmi": 0.02}},
    {"name": "age_12m", "type": "gaussian", "target": 12.94, "sd": 0.79, "coef": {}},
    {"name": "breastfeeding_wk", "type": "gaussian", "target": 11.0, "sd": 9.0,
     "coef": {"seifa=high": 3.0, "smoking": -4.0, "vaginal_birth": 2.0}},
    {"name": "postnatal_smoke", "type": "bernoulli", "target": 0.15, "coef": {"smoking": 2.4, "seifa=high": -0.5}},
]

EXPOSURE_MAIN = {
    "male": -0.30, "seifa=med": 0.05, "seifa=high": 0.15, "maternal_age": 0.10, "bmi": 0.15,
    "smoking": 0.20, "gest_diabetes": 0.05, "preeclampsia": -0.05, "term_birth": -0.05,
    "vaginal_birth": 0.20, "birthweight": -0.20, "wlz_12m": 0.10, "age_12m": 0.05,
    "breastfeeding_wk": -0.15, "postnatal_smoke": 0.05,
}
OUTCOME_MAIN = {
    "male": 0.20, "seifa=med": 0.0, "seifa=high": -0.10, "maternal_age": 0.10, "bmi": 0.25,
    "smoking": 0.15, "gest_diabetes": 0.05, "preeclampsia": 0.10, "term_birth": -0.05,
    "vaginal_birth": -0.15, "birthweight": -0.20, "wlz_12m": 0.20, "age_12m": 0.05,
    "breastfeeding_wk": -0.10, "postnatal_smoke": 0.05,
}
EXPOSURE_SQUARES = {"bmi": 0.15, "birthweight": 0.10, "maternal_age": -0.10, "wlz_12m": 0.10}
OUTCOME_SQUARES = {"bmi": 0.10, "birthweight": -0.10, "maternal_age": 0.05, "wlz_12m": 0.15}
# base interaction coefficients; the mechanism's multiplier scales them
EXPOSURE_INTERACTIONS = [
    ["bmi", "male", 0.10], ["bmi", "birthweight", -0.08], ["maternal_age", "smoking", 0.08],
    ["wlz_12m", "breastfeeding_wk", -0.08], ["birthweight", "term_birth", 0.06], ["bmi", "seifa=high", 0.06],
    ["maternal_age", "bmi", 0.08], ["wlz_12m", "male", -0.06], ["birthweight", "smoking", 0.06],
    ["breastfeeding_wk", "vaginal_birth", 0.06],
]
OUTCOME_INTERACTIONS = [
    ["bmi", "wlz_12m", 0.10], ["birthweight", "male", -0.08], ["maternal_age", "bmi", 0.08],
    ["smoking", "postnatal_smoke", 0.06], ["breastfeeding_wk", "wlz_12m", -0.06],
    ["birthweight", "term_birth", 0.06], ["bmi", "seifa=high", -0.06],
]
EXPOSURE_MODIFIERS = {"bmi": 0.10, "male": -0.08, "birthweight": 0.06}

N_MET, N_FACTORS = 73, 5
FACTOR_DRIVERS = [("bmi", 0.30), ("wlz_12m", 0.30), ("male", 0.20), ("age_12m", 0.20), ("breastfeeding_wk", 0.20)]


def _solve_background(rng: np.random.Generator) -> tuple[list[dict], dict]:
    """Fill in intercepts so each variable hits its target mean or prevalence."""
    out, cols = [], {}
    n = SOLVE_N
    for v in BACKGROUND:
        v = dict(v)
        target = v.pop("target", None)
        if v["type"] == "categorical":
            u = rng.random(n)
            k = len(v["levels"])
            draw = np.minimum((u * k).astype(int), k - 1)
            for i, lev in enumerate(v["levels"][1:], start=1):
                cols[f"{v['name']}={lev}"] = (draw == i).astype(float)
            out.append(v)
            continue
        lin = np.zeros(n)
        for c, b in v["coef"].items():
            lin += b * cols[c]
        if v["type"] == "gaussian":
            v["intercept"] = round(target - float(lin.mean()), 6)
            cols[v["name"]] = v["intercept"] + lin + v["sd"] * rng.standard_normal(n)
        else:
            v["intercept"] = round(brentq(lambda a: float(expit(a + lin).mean()) - target, -30, 30), 6)
            cols[v["name"]] = (rng.random(n) < expit(v["intercept"] + lin)).astype(float)
        out.append(v)
    return out, cols


def _metabolite_block(rng: np.random.Generator) -> dict:
    L = np.zeros((N_MET, N_FACTORS))
    for j in range(N_MET):
        f = j % N_FACTORS
        L[j, f] = rng.uniform(0.55, 0.8)
        for g in range(N_FACTORS):
            if g != f:
                L[j, g] = rng.uniform(-0.1, 0.1)
    L = np.round(L, 4)
    uniq = np.round(1.0 - (L ** 2).sum(axis=1), 6)
    return {
        "count": N_MET,
        "prefix": "met",
        "factors": N_FACTORS,
        "drivers": [{"column": c, "coef": g} for c, g in FACTOR_DRIVERS],
        "loadings": L.tolist(),
        "uniqueness": uniq.tolist(),
    }


def _metabolite_terms(rng: np.random.Generator, scale: float) -> dict:
    """Sparse main effects: ten notable metabolites plus weak signals elsewhere."""
    coef = rng.uniform(-0.02, 0.02, N_MET)
    idx = rng.choice(N_MET, 10, replace=False)
    coef[idx] = rng.choice([-1.0, 1.0], 10) * rng.uniform(0.06, 0.12, 10)
    return {f"met{j + 1:02d}": round(float(scale * c), 4) for j, c in enumerate(coef)}


def _skeleton(name: str, large: bool, complex_: bool, m: float, rng: np.random.Generator) -> dict:
    variables, _ = _solve_background(np.random.default_rng(11))
    doc = {
        "name": name,
        "version": 1,
        "confounder_set": "large" if large else "small",
        "interaction_multiplier": m,
        "variables": variables,
        "metabolites": _metabolite_block(np.random.default_rng(12)) if large else None,
        "standardization": {},
        "exposure": {"intercept": 0.0, "main": dict(EXPOSURE_MAIN)},
        "outcome": {"intercept": 0.0, "main": dict(OUTCOME_MAIN), "noise_sd": 0.85},
    }
    if large:
        doc["exposure"]["main"].update(_metabolite_terms(np.random.default_rng(13), 1.0))
        doc["outcome"]["main"].update(_metabolite_terms(np.random.default_rng(14), 1.0))
    if complex_:
        doc["exposure"]["squares"] = dict(EXPOSURE_SQUARES)
        doc["outcome"]["squares"] = dict(OUTCOME_SQUARES)
        exp_int = [list(t) for t in EXPOSURE_INTERACTIONS]
        out_int = [list(t) for t in OUTCOME_INTERACTIONS]
        if large:  # swap some background pairs for metabolite pairs
            exp_int[-3:] = [["met01", "met07", 0.08], ["met12", "bmi", -0.06], ["met20", "met33", 0.06]]
            out_int[-2:] = [["met02", "met08", 0.08], ["met15", "wlz_12m", -0.06]]
            doc["exposure"]["squares"] = {"bmi": 0.15, "birthweight": 0.10, "met03": -0.10, "met11": 0.10}
            doc["outcome"]["squares"] = {"bmi": 0.10, "wlz_12m": 0.15, "met04": -0.10, "met09": 0.05}
        doc["exposure"]["interactions"] = exp_int
        doc["outcome"]["interactions"] = out_int
        doc["outcome"]["exposure_interactions"] = dict(EXPOSURE_MODIFIERS)
    if not large:
        del doc["metabolites"]
    return doc


def _standardize(doc: dict) -> dict:
    """Record column means / SDs, then solve the exposure and outcome intercepts."""
    doc["standardization"] = {c: [0.0, 1.0] for c in _all_columns(doc)}
    spec = dgm.DgmSpec(doc)
    rng = RngStream(99)
    cols = dgm._background(spec, SOLVE_N, rng.child(0))
    for c, v in cols.items():
        doc["standardization"][c] = [round(float(v.mean()), 6), round(float(v.std()), 6)]
    spec = dgm.DgmSpec(doc)
    cols = dgm._confounders(spec, SOLVE_N, rng.child(0))
    for c in spec.columns:
        if c.startswith("met"):
            doc["standardization"][c] = [round(float(cols[c].mean()), 6), round(float(cols[c].std()), 6)]
    spec = dgm.DgmSpec(doc)
    eta = dgm._confounder_terms(spec, {**doc["exposure"], "intercept": 0.0}, cols)
    a = brentq(lambda a: float(expit(a + eta).mean()) - 0.25, -30, 30)
    doc["exposure"]["intercept"] = round(a, 6)
    prev = expit(doc["exposure"]["intercept"] + eta)
    doc["prevalence"] = round(float(prev.mean()), 6)
    spec = dgm.DgmSpec(doc)
    mu = dgm._confounder_terms(spec, {**doc["outcome"], "intercept": 0.0}, cols) + prev * dgm._modification(spec, cols)
    doc["outcome"]["intercept"] = round(-float(mu.mean()), 6)
    return doc


def _all_columns(doc: dict) -> list[str]:
    cols = [c for v in doc["variables"] for c in dgm._columns_of(v)]
    if doc.get("metabolites"):
        cols += dgm._metabolite_names(doc["metabolites"])
    return cols


def pilot_effect_table(spec: dgm.DgmSpec, sizes=SIZES, reps: int = 40, power: float = 0.8) -> dict[int, float]:
    """Normal-approximation effect sizes from the empirical SD of AIPW estimates at ``beta = 0``.

    The empirical SD is used rather than model SEs, which a plain GLM
    underestimates when confounders are many relative to ``n``.
    """
    lib = Library([LearnerSpec("glm-main")], "glm")
    cfg = EstimatorConfig(method="AIPW", library=lib, sl_folds=2)
    z = norm.ppf(0.975) + norm.ppf(power)
    table = {}
    for n in sizes:
        psi = [estimate_effect(dgm.generate(spec, n, RngStream(500 + n, r), beta=0.0), cfg).psi for r in range(reps)]
        table[n] = round(float(z * np.std(psi, ddof=1)), 4)
    return table


DEFINITIONS = {
    "simple-1": dict(large=False, complex_=False, m=1.0),
    "complex-1a": dict(large=False, complex_=True, m=2.0),
    "complex-1b": dict(large=False, complex_=True, m=4.0),
    "simple-2": dict(large=True, complex_=False, m=1.0),
    "complex-2": dict(large=True, complex_=True, m=1.0),
}


def build(name: str) -> dict:
    d = DEFINITIONS[name]
    doc = _standardize(_skeleton(name, d["large"], d["complex_"], d["m"], np.random.default_rng(0)))
    spec = dgm.DgmSpec(doc)
    table = pilot_effect_table(spec)
    doc["effect"] = {str(k): v for k, v in table.items()}
    doc["default_beta"] = table[500]
    doc["effect_source"] = "pilot"
    return doc


def main(argv=None) -> int:
    names = (argv or sys.argv[1:]) or list(DEFINITIONS)
    out = Path(__file__).with_name("specs")
    for name in names:
        doc = build(name)
        (out / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(name, doc["prevalence"], doc["effect"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

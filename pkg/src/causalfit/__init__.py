"""Doubly robust estimation of average causal effects with Super Learner and cross-fitting."""
from .data import Dataset, FoldPlan, RngStream, ValidationError, load_dataset, make_folds, rng_stream
from .learners import DesignMatrix, LearnerSpec, expand_design, fit_learner, predict_learner
from .superlearner import Library, SlFit, cv_prediction_matrix, fit_super_learner, sl_predict, solve_meta_weights
from .estimators import (
    EffectEstimate,
    EstimationError,
    NuisancePredictions,
    aipw_estimate,
    gcomp_estimate,
    tmle_estimate,
    tmle_target,
    truncate_propensity,
    wald_ci,
)
from .crossfit import EstimatorConfig, crossfit_nuisances, estimate_effect, estimate_effects
from .dgm import DgmSpec, TruthRecord, calibrate_effect, generate, load_spec, true_ace
from .metrics import PerformanceReport, ReplicationRecord, compute_performance, flag_unstable

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FoldPlan", "RngStream", "ValidationError", "load_dataset", "make_folds", "rng_stream",
    "DesignMatrix", "LearnerSpec", "expand_design", "fit_learner", "predict_learner",
    "Library", "SlFit", "cv_prediction_matrix", "fit_super_learner", "sl_predict", "solve_meta_weights",
    "EffectEstimate", "EstimationError", "NuisancePredictions", "aipw_estimate", "gcomp_estimate",
    "tmle_estimate", "tmle_target", "truncate_propensity", "wald_ci",
    "EstimatorConfig", "crossfit_nuisances", "estimate_effect", "estimate_effects",
    "DgmSpec", "TruthRecord", "calibrate_effect", "generate", "load_spec", "true_ace",
    "PerformanceReport", "ReplicationRecord", "compute_performance", "flag_unstable",
]

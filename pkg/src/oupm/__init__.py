"""Exogenous-input Ornstein-Uhlenbeck modelling of noisy time series.

Fit ``dX = lam (mu(u) - X) dt + sigma(u) dW`` by exact-transition maximum
likelihood, sample predictive path ensembles from inputs alone, and score
their calibration.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .core import (ENGINE_CHANNELS, InputSeries, Model, ModelParams, ObservationSeries, PreprocessStats, fit_preprocess,
                   softplus, softplus_inverse, transform_forward, transform_inverse)
from .metrics import EvalReport, coverage, evaluate, ks_statistic, nrmse, pit_values, qq_points
from .ou_process import (TransitionStats, euler_maruyama_oracle, mu_at, sigma_at, transition,
                         transition_logpdf)
from .sampler import PathEnsemble, cumulative_stats, initial_condition, sample_paths
from .synthetic import SynthSpec, generate, surrogate, surrogate_truth, verify_recovery
from .trainer import (FitDivergedError, FitReport, TrainConfig, TransitionExample, TransitionSet,
                      build_transitions, fit, nll_gradient, nll_loss, split_validation)

__all__ = [
    "BACKEND", "ENGINE_CHANNELS", "InputSeries", "Model", "ModelParams", "ObservationSeries", "PreprocessStats",
    "fit_preprocess", "softplus", "softplus_inverse", "transform_forward", "transform_inverse",
    "EvalReport", "coverage", "evaluate", "ks_statistic", "nrmse", "pit_values", "qq_points",
    "TransitionStats", "euler_maruyama_oracle", "mu_at", "sigma_at", "transition", "transition_logpdf",
    "PathEnsemble", "cumulative_stats", "initial_condition", "sample_paths",
    "FitDivergedError", "FitReport", "TrainConfig", "TransitionExample", "TransitionSet",
    "build_transitions", "fit", "nll_gradient", "nll_loss", "split_validation",
    "SynthSpec", "generate", "surrogate", "surrogate_truth", "verify_recovery",
]

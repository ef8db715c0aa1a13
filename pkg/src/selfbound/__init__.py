"""Realizable self-bounded convex losses: GD/SGD training, LOO stability and bound checks."""

from .errors import (ConfigError, DivergenceError, HypothesisViolation, InfeasibleMarginError,
                     InputError, RangeError, ShapeError, SizeError)
from .losses import Family, LossModel, certified_constants, evaluate, make_loss, rho
from .special import stable_log_half_erfc
from .multiclass import multiclass_loss_and_grad
from .data import (LinearDataset, LooFamily, MulticlassDataset, loo_family, population_estimate,
                   sample_dataset, sample_multiclass)
from .optim import (Method, OptimizerConfig, Trajectory, lower_bound_run, run_gd,
                    run_gd_adaptive_exp, run_sgd)

__all__ = [
    "ConfigError", "DivergenceError", "HypothesisViolation", "InfeasibleMarginError", "InputError",
    "RangeError", "ShapeError", "SizeError", "Family", "LossModel", "certified_constants",
    "evaluate", "make_loss", "rho", "stable_log_half_erfc", "multiclass_loss_and_grad",
    "LinearDataset", "LooFamily", "MulticlassDataset", "loo_family", "population_estimate",
    "sample_dataset", "sample_multiclass", "Method", "OptimizerConfig", "Trajectory",
    "lower_bound_run", "run_gd", "run_gd_adaptive_exp", "run_sgd",
]

"""Relative-sparsity policy learning with selection-aware coefficient variances."""

__version__ = "0.1.0"

from .data import TrajectoryDataset, load_trajectories, standardize_states, unstandardize_states, write_trajectories
from .sim import SimConfig, reward, simulate
from .policy import (
    ActiveSet,
    BehavioralFit,
    CoefficientVector,
    behavioral_influence,
    fit_behavioral,
    hybrid_policy_prob,
    policy_prob,
)
from .objective import DerivativeBundle, ObjectiveOptions, derivatives, kl_est, objective_m, value_is
from .solvers import SolveReport, active_set, adaptive_weights, maximize_m, maximize_w, prox_shifted, saturation_lambda
from .inference import (
    CoefficientVariance,
    assemble_r,
    coef_variance_adaptive,
    coef_variance_baseline,
    coef_variance_behavioral,
    selection_aware_variance,
    value_variance,
)
from .sweep import EmpiricalResult, SweepConfig, SweepResult, empirical_variance, sweep

"""Stability-based generalization and excess risk bounds for full-batch gradient descent."""
from .bound_calc import (BoundReport, RegimeInputs, convex_bounds, excess_decomposition,
                         generic_gen_bound, nonconvex_bounds, pl_bounds, stationary_gen_bound,
                         strongly_convex_bounds, sum_product_closed, sum_product_exact)
from .errors import (ConvergenceError, DiagnosticUnavailableError, DivergenceError,
                     NumericOverflowError, RegimeMisconfigurationError, RegimeViolationError,
                     UsageError)
from .estimators import FullBatchGD
from .experiment_harness import ExperimentConfig, fit_rate, run_cell, run_regime, verify_bounds
from .gd_engine import StepSchedule, Trajectory, run_gd, run_sgd_baseline
from .loss_zoo import (Dataset, Example, LossModel, erm_minimizer, make_distribution, make_model,
                       population_risk)
from .stability_lab import ReplicatePlan, estimate_stability

__version__ = "0.1.0"

"""Joint batch-size and data-quality schedules for SGD on power-law linear regression."""

__version__ = "0.1.0"

from .schedule import JointSchedule, NoiseModel, Placement, sigma_eff
from .simulator import DivergenceError, RiskTrajectory, RunConfig, run_moment_oracle, run_sgd
from .spectrum import (KernelSpec, ProblemInstance, Regime, UnsupportedRegimeError, classify_regime,
                       make_instance)

__all__ = [
    "DivergenceError", "JointSchedule", "KernelSpec", "NoiseModel", "Placement", "ProblemInstance",
    "Regime", "RiskTrajectory", "RunConfig", "UnsupportedRegimeError", "classify_regime",
    "make_instance", "run_moment_oracle", "run_sgd", "sigma_eff",
]

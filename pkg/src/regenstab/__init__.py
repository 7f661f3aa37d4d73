"""Mean stability of switched linear systems under regenerative switching."""

from .analysis import (
    LiftedExpectation, StabilityReport, SweepResult, analyze, cycle_transition,
    decide_stability, expected_lift, expected_lift_analytic, expected_lift_exact,
    expected_lift_mc, floquet_check, lifted_cycle_transition, maintenance_family,
    threshold_sweep,
)
from .errors import AssumptionError, ConfigError, DimensionError, ModelViolation
from .lift import infinitesimal_lift, lift_basis, lift_dimension, lift_matrix, lift_vector
from .linalg import expm, expm_convolution, expm_integral, spectral_radius
from .process import (
    Cycle, CycleModel, DelayedSwitchModel, DiscreteMaintenanceModel,
    FiniteSupportModel, MaintenanceModel, PeriodicModel, SwitchedSystem,
    check_assumptions, sample_cycle, substream,
)
from .simulate import ensemble_mean, simulate_path, simulate_paths

__version__ = "0.1.0"

"""Epidemic calibration, optimal vaccination scheduling, and cold-chain
transport thermics for a generalized SEIR (SEIQRDP) model."""

__version__ = "0.1.0"

from .calibration import (FitConfig, FitResult, ObservedSeries,
                          fit_parameters, residual_vector, synthetic_series)
from .epi_core import (CompartmentState, EpidemicParams, controlled_rhs,
                       eval_mortality_rate, eval_recovery_rate,
                       uncontrolled_rhs)
from .errors import (ConfigError, DataParseError, EpictrlError,
                     NumericalError, ScenarioError)
from .ocp import (AdjointState, ControlSignal, ObjectiveWeights, SweepConfig,
                  SweepResult, adjoint_rhs, cost_functional, cost_gradient,
                  extremal_control, forward_backward_sweep,
                  hamiltonian_gradient_u)
from .ode import TimeGrid, Trajectory, integrate, rk4_step
from .thermal import (MaterialProps, TemperatureField, TransportScenario,
                      VialGeometry, required_initial_temperature,
                      thermal_diffusivity, transport_table,
                      unit_response_fd, unit_response_series)

__all__ = [
    "__version__",
    "AdjointState", "CompartmentState", "ConfigError", "ControlSignal",
    "DataParseError", "EpictrlError", "EpidemicParams", "FitConfig",
    "FitResult", "MaterialProps", "NumericalError", "ObjectiveWeights",
    "ObservedSeries", "ScenarioError", "SweepConfig", "SweepResult",
    "TemperatureField", "TimeGrid", "Trajectory", "TransportScenario",
    "VialGeometry", "adjoint_rhs", "controlled_rhs", "cost_functional",
    "cost_gradient", "eval_mortality_rate", "eval_recovery_rate",
    "extremal_control", "fit_parameters", "forward_backward_sweep",
    "hamiltonian_gradient_u", "integrate", "required_initial_temperature",
    "residual_vector", "rk4_step", "synthetic_series", "thermal_diffusivity",
    "transport_table", "uncontrolled_rhs", "unit_response_fd",
    "unit_response_series",
]

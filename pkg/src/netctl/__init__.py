"""Data-driven point-to-point control of linear networks.

Controls are computed directly from recorded experiments (input sequences
and the outputs they produced) instead of from an identified model.
"""

from .ddcontrol import (
    DDSolution,
    dd_min_energy,
    dd_min_energy_approx,
    dd_min_energy_approx_corrected,
    dd_min_energy_corrected,
    dd_min_energy_full_corrected,
    dd_optimal,
    dd_optimal_corrected,
    dd_optimal_x0,
    theorem1_bound,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    InfeasibleDataError,
    InvalidWeightError,
    NetctlError,
    NotControllableError,
    NumericalError,
    PartialStateError,
    ReachabilityError,
)
from .estimators import DataDrivenController, SubspaceIdentifier
from .experiments import DataMatrices, NoiseSpec, add_noise, random_inputs, run_episodic, sliding_window
from .network import (
    ControlProblem,
    ControlSequence,
    LinearNetwork,
    load_network,
    model_based_min_energy_gramian,
    model_based_optimal,
    output_ctrb_matrix,
    save_network,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "ControlProblem",
    "ControlSequence",
    "DDSolution",
    "DataDrivenController",
    "DataMatrices",
    "DimensionError",
    "InfeasibleDataError",
    "InvalidWeightError",
    "LinearNetwork",
    "NetctlError",
    "NoiseSpec",
    "NotControllableError",
    "NumericalError",
    "PartialStateError",
    "ReachabilityError",
    "SubspaceIdentifier",
    "add_noise",
    "dd_min_energy",
    "dd_min_energy_approx",
    "dd_min_energy_approx_corrected",
    "dd_min_energy_corrected",
    "dd_min_energy_full_corrected",
    "dd_optimal",
    "dd_optimal_corrected",
    "dd_optimal_x0",
    "load_network",
    "model_based_min_energy_gramian",
    "model_based_optimal",
    "output_ctrb_matrix",
    "random_inputs",
    "run_episodic",
    "save_network",
    "simulate",
    "sliding_window",
    "theorem1_bound",
]

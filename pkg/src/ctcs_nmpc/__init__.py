"""Receding-horizon trajectory optimization with continuous-time constraint
satisfaction: augmented dynamics, exact multiple-shooting discretization, a
prox-linear SCP loop, and an embedded first-order conic solver."""

from .problem import (
    AugmentedSystem,
    ConfigurationError,
    CostSpec,
    PathConstraints,
    PhysicalSystem,
    TerminalQuadratic,
    augmented_jacobians,
    augmented_rhs,
    initial_augmented_state,
)
from .integrators import (
    IntegratorConfig,
    PropagationDivergedError,
    SensitivityResult,
    foh_interp,
    propagate_dense,
    propagate_segment,
    propagate_with_sensitivities,
)
from .transcription import (
    GridConfig,
    HorizonRangeError,
    LinearizedSegment,
    TrajectoryIterate,
    discretize_segment,
    foh_control,
    linearize_all,
)
from .conic import (
    ConeBlock,
    ConeSpec,
    ConicProblem,
    ConicSolution,
    estimate_operator_norm,
    project_cone,
    solve_conic,
)

__all__ = [
    "AugmentedSystem",
    "ConfigurationError",
    "CostSpec",
    "PathConstraints",
    "PhysicalSystem",
    "TerminalQuadratic",
    "augmented_jacobians",
    "augmented_rhs",
    "initial_augmented_state",
    "IntegratorConfig",
    "PropagationDivergedError",
    "SensitivityResult",
    "foh_interp",
    "propagate_dense",
    "propagate_segment",
    "propagate_with_sensitivities",
    "GridConfig",
    "HorizonRangeError",
    "LinearizedSegment",
    "TrajectoryIterate",
    "discretize_segment",
    "foh_control",
    "linearize_all",
    "ConeBlock",
    "ConeSpec",
    "ConicProblem",
    "ConicSolution",
    "estimate_operator_norm",
    "project_cone",
    "solve_conic",
]

from .poisson import (
    ConvergenceReport,
    EnergyConfig,
    PoissonProblem,
    SingularSystemError,
    convergence_study,
    h1_error,
    manufactured_b,
    manufactured_du,
    manufactured_u,
    solve_poisson_energy,
    solve_poisson_galerkin,
)
from .heat import (
    CornerComparison,
    InfeasibleImpositionError,
    compare_corners,
    fd_steps_for,
    imposition_errors,
    write_slice_csv,
    HeatSolveConfig,
    HeatSTPProblem,
    HeatSTPSolution,
    fd_reference,
    heat_source,
    r2_score,
    solve_heat_stp,
)

__all__ = [
    "compare_corners",
    "convergence_study",
    "ConvergenceReport",
    "CornerComparison",
    "EnergyConfig",
    "fd_reference",
    "fd_steps_for",
    "h1_error",
    "heat_source",
    "HeatSolveConfig",
    "HeatSTPProblem",
    "HeatSTPSolution",
    "imposition_errors",
    "InfeasibleImpositionError",
    "manufactured_b",
    "manufactured_du",
    "manufactured_u",
    "PoissonProblem",
    "r2_score",
    "SingularSystemError",
    "solve_heat_stp",
    "solve_poisson_energy",
    "solve_poisson_galerkin",
    "write_slice_csv",
]

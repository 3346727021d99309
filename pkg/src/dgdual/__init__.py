"""Duality-based convergence studies for broken piecewise-affine methods.

Subpackages build on each other bottom-up: ``mesh`` (structured triangulations
and side topology), ``fem`` (broken affine and lowest-order flux fields with
projections and interpolants), ``functionals`` (penalized energies and their
duals), ``solvers`` (direct, fixed-point, and active-set solvers),
``problems`` (benchmark catalog with exact solutions), and ``harness``
(sweeps, tables, and the command-line interface).
"""

from .fem import (
    DGField,
    RTField,
    cr_gradients,
    cr_interpolate,
    dg_from_midside,
    endpoint_jumps,
    ibp_terms,
    pi0_project,
    rt_from_fluxes,
    rt_interpolate,
)
from .functionals import (
    PenaltyParams,
    ProblemSpec,
    dual_energy,
    duality_gap,
    penalty_J,
    penalty_K,
    power_conjugate,
    power_value,
    primal_energy,
    problem_data,
    reconstruct_dual,
)
from .harness import ConfigError, ResultRow, RunConfig, cli, emit_csv, run_convergence, run_selftest
from .mesh import (
    DIRICHLET,
    INTERIOR,
    NEUMANN,
    Mesh,
    SideSet,
    all_dirichlet,
    all_neumann,
    side_topology,
    structured_mesh,
)
from .problems import (
    ErrorRecord,
    ExperimentCase,
    case_by_name,
    catalog,
    eoc_sequence,
    error_norms,
    observed_order,
)
from .solvers import (
    Assembler,
    LinearSystem,
    SolveReport,
    assemble_poisson,
    solve_obstacle,
    solve_poisson,
    solve_tv,
)

__version__ = "1.0.0"

__all__ = [
    "Assembler",
    "ConfigError",
    "DGField",
    "DIRICHLET",
    "ErrorRecord",
    "ExperimentCase",
    "INTERIOR",
    "LinearSystem",
    "Mesh",
    "NEUMANN",
    "PenaltyParams",
    "ProblemSpec",
    "RTField",
    "ResultRow",
    "RunConfig",
    "SideSet",
    "SolveReport",
    "all_dirichlet",
    "all_neumann",
    "assemble_poisson",
    "case_by_name",
    "catalog",
    "cli",
    "cr_gradients",
    "cr_interpolate",
    "dg_from_midside",
    "dual_energy",
    "duality_gap",
    "emit_csv",
    "endpoint_jumps",
    "eoc_sequence",
    "error_norms",
    "ibp_terms",
    "observed_order",
    "penalty_J",
    "penalty_K",
    "pi0_project",
    "power_conjugate",
    "power_value",
    "primal_energy",
    "problem_data",
    "reconstruct_dual",
    "rt_from_fluxes",
    "rt_interpolate",
    "run_convergence",
    "run_selftest",
    "side_topology",
    "solve_obstacle",
    "solve_poisson",
    "solve_tv",
    "structured_mesh",
]

"""Parametric symmetric eigenvalue pencils and their use in virtual element
discretizations of the Laplace eigenproblem."""

from .assembly import GlobalPencilVEM, assemble, build_dof_map, infsup_probe
from .estimators import BranchClassifier, GeneralizedEigensolver, VEMEigensolver
from .experiments import exact_laplace_eigs, run_convergence, run_sweep, run_tables, run_toy
from .mesh import PolygonalMesh, generate_square_grid, generate_voronoi, load, save, validate
from .pencil import (
    BranchKind,
    ParametricPencil,
    Spectrum,
    check_assumption,
    classify_branch,
    common_kernel_dim,
    evaluate_prediction,
    kernel_dim,
    predict_diagonal_spectrum,
    solve_gep,
    sweep,
    track_branches,
)
from .vem import local_matrices

__version__ = "0.1.0"

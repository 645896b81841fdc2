"""Upwind discontinuous Galerkin for steady linear advection-reaction on
simplicial meshes, with orthonormal modal simplex bases and the CDG projector."""

from .dg import (DGSolution, Discretization, ProblemSpec, SolverError, assemble_global,
                 assemble_local, bilinear_form, constant_field, constant_scalar,
                 energy_identity_check, solve, solve_global, solve_sweep, stability_functional)
from .mesh import (AdmissibilityReport, Mesh, affine_map, build_mesh, check_admissible,
                   classify_facets, gen_structured, load_mesh, save_mesh)
from .norms import ErrorReport, dg_error, dg_norm, l2_error
from .orthopoly import build_basis, dim_poly, koornwinder_eval, reference_simplex
from .projectors import ModalCoeffs, cdg_from_modal, cdg_project, h1_project, l2_project
from .quadrature import composite_refine, gauss_legendre, simplex_rule
from .study import (ConvergenceRecord, RateFit, StudyConfig, build_manufactured, build_testcase1,
                    build_testcase2, fit_rate, run_convergence, run_projector_study)

__version__ = "0.1.0"

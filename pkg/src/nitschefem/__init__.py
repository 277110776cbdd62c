"""2D B-spline Galerkin solvers with weakly enforced Dirichlet conditions.

The package covers the vector Poisson problem, the vector biharmonic
problem and the linearized Kirchhoff-Love plate, all posed as quadratic
energy minimization with boundary conditions imposed through Nitsche's
method (or, for comparison, a bare penalty).  Trace-inequality constants
feeding the penalty selection are estimated from generalized eigenproblems,
and a manufactured-solution harness drives convergence studies.
"""

from .assemble import (AssembledSystem, ConvergenceReport, DofMap, RowResult,
                       StudySpec, assemble, best_approximation,
                       bilinear_action_on_exact, error_norms,
                       evaluate_solution, flux_pairing_of_exact,
                       run_convergence, solve)
from .errors import (ConfigError, DegeneratePencilError,
                     NotPositiveDefiniteError, PencilSizeError, SolveError)
from .formlib import (BoundaryData, EnforcementVariant, ManufacturedSolution,
                      MaterialParams, ProblemKind, biharmonic,
                      boundary_operator, corner_jump, interior_kernel,
                      kirchhoff_plate, manufactured, nitsche_edge_kernels,
                      poisson, rhs_kernels)
from .mesh import (BoundaryPartition, CartesianMesh, CornerSet, EdgeMesh,
                   RectDomain, build_mesh, classify_corners,
                   dirichlet_edge_mesh, neumann_edge_mesh)
from .quadrature import QuadRule, gauss_rule_1d, gauss_rule_2d
from .spline import (KnotVector, TensorSplineSpace, eval_basis_1d,
                     open_knot_vector, tensor_space_for_mesh)
from .traceconst import (NitscheConstants, TracePencil, assemble_trace_pencil,
                         combined_constants, constants_for,
                         largest_finite_eigenvalue, rayleigh_refine,
                         rayleigh_sample)

__version__ = "0.1.0"

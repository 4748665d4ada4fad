"""Compartmental finite-difference schemes for divergence-form elliptic operators."""

from .coeff import (
    AdmissibilityReport,
    CoefficientField,
    ConfigurationError,
    Region,
    RegionError,
    admissibility,
    auxiliary_tensor,
    check_aux_posdef,
    constant_field,
    example71,
    example72,
    identity_field,
    omega,
)
from .embed import ErrorReport, HatBasis, embed, fourier_coefficients, l2_inner, relative_errors
from .grid import AlignmentError, DomainBox, GridFunction, GridSpec, backward_diff, forward_diff, knots, lp_norm
from .problems import Problem, build_system, builtin_problem
from .rhs import (
    BoundaryData,
    Density,
    DomainError,
    FunctionalSpec,
    LineDirac,
    MeasureSpec,
    PointDirac,
    dirichlet_lift,
    discretize_functional,
    discretize_measure,
    weak_form_rhs,
)
from .scheme import (
    AssemblyError,
    SchemeKind,
    SchemeMatrix,
    assemble,
    assemble_basic_2d,
    assemble_extended_2d,
    assemble_nd,
    classify_sign_regions,
    restrict_dirichlet,
    verify_compartmental,
)
from .solver import SolveConfig, SolveReport, StructuralError, gauss_seidel_solve, jacobi_solve, solve

__version__ = "0.1.0"

"""Laminates, piecewise-affine realizations and iterative solvers for prescribed determinants."""

from lamforge.checks import (
    LaminateDiagnostics,
    TestFunction,
    TestFunctionFamily,
    barycenter,
    default_family,
    jensen_convex_check,
    minors_consistency,
    moment_p,
    support_residual,
    tightness_ratio,
)
from lamforge.constraints import ConstraintError, ConstraintSpec, clamp_rate
from lamforge.grid import PiecewiseAffineMap, SimplicialGrid, gradient_stats, kuhn_grid
from lamforge.integrate import (
    IterationDiagnostics,
    RefineOptions,
    convex_integrate,
    refine_once,
    residual,
    solve_prescribed_jacobian,
)
from lamforge.kernels import BACKEND
from lamforge.laminate import (
    DiscreteLaminate,
    SplitStep,
    build_laminate,
    classify_case,
    laminate_for_constraint,
    split_case_one,
    split_case_two,
)
from lamforge.matrix import (
    SignedSVD,
    SVDConvergenceError,
    determinant,
    frobenius_norm,
    rank_one_defect,
    signed_svd,
)
from lamforge.realize import ResolutionExhausted, realize_laminate, realize_split

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConstraintError",
    "ConstraintSpec",
    "DiscreteLaminate",
    "IterationDiagnostics",
    "LaminateDiagnostics",
    "PiecewiseAffineMap",
    "RefineOptions",
    "ResolutionExhausted",
    "SVDConvergenceError",
    "SignedSVD",
    "SimplicialGrid",
    "SplitStep",
    "TestFunction",
    "TestFunctionFamily",
    "barycenter",
    "build_laminate",
    "clamp_rate",
    "classify_case",
    "convex_integrate",
    "default_family",
    "determinant",
    "frobenius_norm",
    "gradient_stats",
    "jensen_convex_check",
    "kuhn_grid",
    "laminate_for_constraint",
    "minors_consistency",
    "moment_p",
    "rank_one_defect",
    "realize_laminate",
    "realize_split",
    "refine_once",
    "residual",
    "signed_svd",
    "solve_prescribed_jacobian",
    "split_case_one",
    "split_case_two",
    "support_residual",
    "tightness_ratio",
]

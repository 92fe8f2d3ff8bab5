"""Numerical tensor calculus for pairs of singular distributions.

Charts with explicit metrics, forward-mode differentiation, structural
tensors of an adapted endomorphism pair, pointwise identity checks, and
quadrature-based integral checks.
"""

from .chart_geometry import (
    Chart,
    Geometry,
    MetricError,
    christoffel,
    cov_at,
    div_endo,
    div_vector,
    einstein_tensor,
    ensure_geometry,
    lie_bracket,
    ricci,
    riemann,
    scalar_curvature,
    sectional_curvature,
)
from .dist_tensors import (
    b_tensors,
    codazzi_residual,
    contact_identity_residual,
    contact_structure_residuals,
    dist_invariants,
    div_p,
    collapse_residual,
    div_equivalence_residuals,
    trace_identity_residuals,
    tsr_tensors,
    walczak_pointwise_residual,
)
from .endo_fields import (
    EndoPair,
    NotPositiveSemidefinite,
    adjoint,
    allowed_forms,
    allowed_residual,
    check_pair,
    sqrt_psd,
)
from .quadrature import (
    Axis,
    QuadratureGrid,
    integral_formula_check,
    integrate,
    refine_counts,
    stokes_check,
    volume,
)
from .scenarios import (
    SCENARIO_NAMES,
    ScenarioManifold,
    build_scenario,
    conformal_hopf,
    einstein_s3xt2,
    flat_torus_projectors,
    hopf_contact_s3,
    non_allowed_rotated,
    scaled_identity,
    warped_torus,
)

__all__ = [
    "Axis",
    "Chart",
    "EndoPair",
    "Geometry",
    "MetricError",
    "NotPositiveSemidefinite",
    "QuadratureGrid",
    "SCENARIO_NAMES",
    "ScenarioManifold",
    "adjoint",
    "allowed_forms",
    "allowed_residual",
    "b_tensors",
    "build_scenario",
    "check_pair",
    "christoffel",
    "codazzi_residual",
    "collapse_residual",
    "conformal_hopf",
    "contact_identity_residual",
    "contact_structure_residuals",
    "cov_at",
    "dist_invariants",
    "div_endo",
    "div_equivalence_residuals",
    "div_p",
    "div_vector",
    "einstein_s3xt2",
    "einstein_tensor",
    "ensure_geometry",
    "flat_torus_projectors",
    "hopf_contact_s3",
    "integral_formula_check",
    "integrate",
    "lie_bracket",
    "non_allowed_rotated",
    "refine_counts",
    "ricci",
    "riemann",
    "scalar_curvature",
    "scaled_identity",
    "sectional_curvature",
    "sqrt_psd",
    "stokes_check",
    "trace_identity_residuals",
    "tsr_tensors",
    "volume",
    "walczak_pointwise_residual",
    "warped_torus",
]

__version__ = "0.1.0"

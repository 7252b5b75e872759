"""Helmholtz layer potentials: Nyström discretisations, high-frequency norm
sweeps and the sharp-example families that saturate them."""

from . import diagnostics, examples, geometry, kernels, operators, scaling, specfun
from .geometry import BoundaryGeometry, DomainRegion, QuadratureSet, make_geometry, quadrature
from .kernels import KernelSpec, eval_dlp_kernel, eval_kernel
from .operators import NormEstimate, OperatorMatrix, assemble, build_operator, operator_norm
from .scaling import ScalingFit, SweepResult, fit_power_law, sweep

__version__ = "0.1.0"

__all__ = [
    "BoundaryGeometry",
    "DomainRegion",
    "KernelSpec",
    "NormEstimate",
    "OperatorMatrix",
    "QuadratureSet",
    "ScalingFit",
    "SweepResult",
    "assemble",
    "build_operator",
    "diagnostics",
    "eval_dlp_kernel",
    "eval_kernel",
    "examples",
    "fit_power_law",
    "geometry",
    "kernels",
    "make_geometry",
    "operator_norm",
    "operators",
    "quadrature",
    "scaling",
    "specfun",
    "sweep",
]

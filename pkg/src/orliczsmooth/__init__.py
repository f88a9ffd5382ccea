"""Constructive smooth approximation in Orlicz-Sobolev norms on polygons.

Pipeline: Whitney decomposition of a simply connected polygonal domain,
Young-function modulars and Luxemburg norms, moment-condition polynomial
projections, a boundary-layer partition of unity, and the glued approximant
whose k-th gradient error is driven to zero in the Luxemburg norm.
"""
from ._backend import BACKEND_NAME, get_kernels
from .geometry import (
    DyadicSquare,
    GeometryError,
    PolygonDomain,
    WhitneyDecomposition,
    comb_domain,
    find_chain,
    l_shape_domain,
    unit_square_domain,
    whitney_decompose,
)
from .orlicz import (
    OrliczError,
    YoungFunction,
    doubling_constant_estimate,
    llogl_young,
    luxemburg_norm,
    modular,
    parse_young,
    plog_young,
    power_young,
)
from .fields import (
    FieldError,
    FunctionField,
    PolynomialField,
    Quadrature,
    RadialPowerField,
    TrigField,
    gradk_magnitude,
    integrate,
    make_singular_field,
    parse_field,
)
from .approx import ApproxError, Polynomial, project
from .layers import (
    CoreRegion,
    LayerDecomposition,
    LayerError,
    PartitionOfUnity,
    build_layers,
    core_region,
    partition_of_unity,
)
from .density import (
    Approximant,
    ConvergenceRow,
    DensityError,
    approximation_error,
    build_approximant,
    convergence_study,
    rank_correlation,
    rows_to_csv,
    truncate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME", "get_kernels", "__version__",
    "DyadicSquare", "GeometryError", "PolygonDomain", "WhitneyDecomposition",
    "comb_domain", "find_chain", "l_shape_domain", "unit_square_domain",
    "whitney_decompose",
    "OrliczError", "YoungFunction", "doubling_constant_estimate", "llogl_young",
    "luxemburg_norm", "modular", "parse_young", "plog_young", "power_young",
    "FieldError", "FunctionField", "PolynomialField", "Quadrature",
    "RadialPowerField", "TrigField", "gradk_magnitude", "integrate",
    "make_singular_field", "parse_field",
    "ApproxError", "Polynomial", "project",
    "CoreRegion", "LayerDecomposition", "LayerError", "PartitionOfUnity",
    "build_layers", "core_region", "partition_of_unity",
    "Approximant", "ConvergenceRow", "DensityError", "approximation_error",
    "build_approximant", "convergence_study", "rank_correlation", "rows_to_csv",
    "truncate",
]

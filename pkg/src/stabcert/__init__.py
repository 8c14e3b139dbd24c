"""stabcert: numerical stability certificates for scalar difference equations.

The package analyses recursions x_{n+1} = F(x_n, ..., x_{n-k+1}) around a
fixed point: the expansion-based strong local stability test, construction
and grid verification of one-dimensional enveloping maps (k = 2), the
monotone-embedding criterion, and orbit simulation for corroboration.
"""

from .errors import (
    EvalDomainError,
    FixedPointError,
    MultipleRootsError,
    NonConvergenceError,
    ParseError,
    PreconditionError,
    StabcertError,
)
from .expr import DualVector, Expression, parse
from .mapdef import (
    MapSpec,
    NormalizedMap,
    catalogue,
    catalogue_names,
    find_fixed_point,
    find_fixed_points,
    get_map,
    load_mapspec,
    normalize,
    normalize_shift,
    prepare,
    sample_params,
)

__version__ = "0.1.0"

__all__ = [
    "DualVector",
    "Expression",
    "EvalDomainError",
    "FixedPointError",
    "MapSpec",
    "MultipleRootsError",
    "NonConvergenceError",
    "NormalizedMap",
    "ParseError",
    "PreconditionError",
    "StabcertError",
    "catalogue",
    "catalogue_names",
    "find_fixed_point",
    "find_fixed_points",
    "get_map",
    "load_mapspec",
    "normalize",
    "normalize_shift",
    "parse",
    "prepare",
    "sample_params",
]

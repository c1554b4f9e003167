"""Localized index computations on truncated Fourier models.

Modules:
    harmonics   trigonometric polynomials and circle diffeomorphisms
    symbols     classical symbols on the circle and product symbols on the torus
    operators   truncated Fourier operators, spectral calculus and Fredholm indices
    zeta        zeta continuation, Wodzicki and equivariant residues, residue pairings
    foliated    crossed-product elements, trace functionals and index pairings
    scenario    scenario schema, builtins and report generation (used by cli)
"""

from .errors import LocIndexError, ScenarioSchemaError
from .harmonics import CircleDiffeo, TrigPoly, critical_values, fixed_points, flow_time_one
from .operators import (
    EigenData,
    FourierOperator,
    QModel,
    canonical_q,
    fredholm_index,
    milnor_idempotent,
    quantize,
    second_q,
    toeplitz,
    winding_number,
)
from .symbols import ClassicalSymbol, ProductSymbol2D, compose1d, parametrix1d
from .zeta import (
    ContinuationConfig,
    LaurentData,
    continue_zeta,
    equivariant_residue_local,
    equivariant_residue_spectral,
    residue_pairing_spectral,
    wodzicki_local,
)

__version__ = "0.1.0"

__all__ = [
    "CircleDiffeo",
    "ClassicalSymbol",
    "ContinuationConfig",
    "EigenData",
    "FourierOperator",
    "LaurentData",
    "LocIndexError",
    "ProductSymbol2D",
    "QModel",
    "ScenarioSchemaError",
    "TrigPoly",
    "canonical_q",
    "compose1d",
    "continue_zeta",
    "critical_values",
    "equivariant_residue_local",
    "equivariant_residue_spectral",
    "fixed_points",
    "flow_time_one",
    "fredholm_index",
    "milnor_idempotent",
    "parametrix1d",
    "quantize",
    "residue_pairing_spectral",
    "second_q",
    "toeplitz",
    "winding_number",
    "wodzicki_local",
]

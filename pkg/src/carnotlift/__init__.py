"""Stratified Lie groups, contact lifts through central extensions, and Hölder experiments."""

from .algebra import StratifiedAlgebra, load_algebra, validate
from .errors import (
    CarnotError,
    ChartError,
    DegeneracyError,
    NotLiftableError,
    StructuralError,
    ValidationError,
)
from .extension import CentralExtension, build_extension, hom_obstruction, load_extension, potential_form
from .group import (
    GroupElement,
    contact_coframe,
    dilate,
    inverse,
    left_invariant_frame,
    left_quotient,
    multiply,
    quasi_metric,
)
from .lifting import check_liftable, closed_loop_defect, fiber_hom_extract, lift_map, pansu_quotient
from .maps import SampledMap, load_map, save_map

__version__ = "0.1.0"

__all__ = [
    "CarnotError",
    "CentralExtension",
    "ChartError",
    "DegeneracyError",
    "GroupElement",
    "NotLiftableError",
    "SampledMap",
    "StratifiedAlgebra",
    "StructuralError",
    "ValidationError",
    "build_extension",
    "check_liftable",
    "closed_loop_defect",
    "contact_coframe",
    "dilate",
    "fiber_hom_extract",
    "hom_obstruction",
    "inverse",
    "left_invariant_frame",
    "left_quotient",
    "lift_map",
    "load_algebra",
    "load_extension",
    "load_map",
    "multiply",
    "pansu_quotient",
    "potential_form",
    "quasi_metric",
    "save_map",
    "validate",
]

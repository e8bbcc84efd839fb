"""Exception hierarchy shared by every module."""

from __future__ import annotations


class CarnotError(Exception):
    """Base class for library errors."""


class StructuralError(CarnotError):
    """Objects that must share an algebra, dimension or chart do not."""


class ValidationError(CarnotError):
    """An algebra, cocycle or grading invariant is violated."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ChartError(CarnotError):
    """A point, stencil or curve leaves the sampled domain box."""


class DegeneracyError(CarnotError):
    """A matrix or form that must be nondegenerate is (numerically) singular."""


class NotLiftableError(CarnotError):
    """A closed-loop defect exceeds tolerance; carries the offending loop."""

    def __init__(self, message: str, witness_loop=None, defect=None, tolerance=None):
        super().__init__(message)
        self.witness_loop = witness_loop
        self.defect = defect
        self.tolerance = tolerance

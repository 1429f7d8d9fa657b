"""Exception hierarchy shared across the package.

Input/contract violations derive from :class:`ValidationError`; failures that
occur while computing (singular solves, overflow, oracle limits) derive from
:class:`ComputationError`.  The CLI maps the former to exit code 1 and the
latter to exit code 2.
"""


class AnyctrlError(Exception):
    """Base class for all package errors."""


class ValidationError(AnyctrlError):
    """An input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """A configuration file is not syntactically valid."""


class DimensionMismatch(ValidationError):
    """Matrix shape does not match the declared availability capacity."""


class NegativeEntry(ValidationError):
    """A transition matrix contains a negative entry."""


class NonStochasticRow(ValidationError):
    """A transition matrix row does not sum to one within tolerance."""


class Reducible(ValidationError):
    """The availability chain is not irreducible."""


class Periodic(ValidationError):
    """The availability chain has period greater than one."""


class CapacityTooSmall(ValidationError):
    """The buffer capacity is below the minimum the operation supports."""


class ZeroInputGain(ValidationError):
    """A linear test plant was requested with input gain zero."""


class HorizonTooShort(ValidationError):
    """The simulation horizon does not cover the cost window."""


class NonScalarPlant(ValidationError):
    """An operation defined for scalar plants received a vector plant."""


class GridOutOfRange(ValidationError):
    """A contraction-rate grid is empty or leaves [0, 1)."""


class ComputationError(AnyctrlError):
    """A numeric computation could not be completed to specification."""


class SolverFailure(ComputationError):
    """A linear solve kept a residual above tolerance after refinement."""


class NotApplicable(ComputationError):
    """A certificate's hypothesis fails, so its value is undefined."""


class OracleTooLarge(ComputationError):
    """The path-enumeration oracle was asked for an infeasible problem size."""


class NumericOverflow(ComputationError):
    """A simulated state exceeded the divergence guard."""


class CertificateNotSatisfied(ComputationError):
    """An experiment requiring a certificate below one was refused."""

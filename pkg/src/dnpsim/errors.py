"""Exception and warning types shared across the package."""


class DnpsimError(Exception):
    """Base class for all package errors."""


class NotHermitian(DnpsimError):
    """Matrix fails the Hermitian symmetry check."""


class NotUnitary(DnpsimError):
    """Matrix fails the unitarity check."""


class NoConvergence(DnpsimError):
    """An iterative eigensolver failed to converge."""


class DimensionMismatch(DnpsimError):
    """Operands have incompatible dimensions."""


class DimensionOverflow(DnpsimError):
    """Joint Hilbert space would exceed the supported size."""


class ParseError(DnpsimError):
    """Config text could not be parsed; message includes a line number."""


class ValidationError(DnpsimError):
    """A field value violates its contract; message names the field."""


class InvalidTau(DnpsimError):
    """Pulse spacing tau is non-positive or too short for the pulses."""


class NotIdealPulses(DnpsimError):
    """Operation requires the ideal-pulse polarisation sequence."""


class DegenerateSpins(DnpsimError):
    """Two precession frequencies coincide; the shift formula diverges."""


class ZeroCoupling(UserWarning):
    """Transfer requested for a spin with no coupling and no detuning."""


class ConvergenceCap(UserWarning):
    """Repetition cap reached before the convergence tolerance."""


class ValidityWarning(UserWarning):
    """Inputs are outside the validity regime of an approximation."""

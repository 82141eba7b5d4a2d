"""Exception hierarchy shared by all modules."""


class DualityError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(DualityError, ValueError):
    """Index out of bounds or inconsistent dimensions."""


class NumericError(DualityError, ArithmeticError):
    """A computation produced a non-finite value."""


class DivergenceError(DualityError):
    """Training left the overflow guard."""


class EstimationError(DualityError):
    """Not enough usable samples to estimate a rotation."""


class MultiBranchError(DualityError):
    """The data-to-jump map is not monotone on the requested branch."""


class EmptyHistogramError(DualityError):
    """No samples fell inside the histogram window."""


class InsufficientDataError(DualityError):
    """Too few populated bins for a power-law fit."""


class SingularityError(DualityError, ZeroDivisionError):
    """A formula was evaluated at its singular point."""


class OutOfRegimeError(DualityError, ValueError):
    """Argument outside the validity regime of an approximation."""


class DomainError(DualityError, ValueError):
    """Integration interval crosses a singularity."""


class ConfigError(DualityError, ValueError):
    """Invalid experiment configuration."""

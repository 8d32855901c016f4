"""Exception hierarchy shared by every module."""


class MzlawError(Exception):
    """Base class for library errors."""


class DomainError(MzlawError, ValueError):
    """Argument lies outside the validity domain of a function."""


class NumericOverflowError(MzlawError, ArithmeticError):
    """A subexpression evaluated to a non-finite value."""


class NotFoundError(MzlawError):
    """A scan finished without finding the requested point."""


class BracketError(MzlawError):
    """Root bracketing failed (target below the monotone range)."""


class NonConvergenceError(MzlawError):
    """An iterative method hit its iteration cap."""


class StepUnderflowError(MzlawError, ArithmeticError):
    """A finite-difference step vanished in floating point."""


class ExpressionSyntaxError(MzlawError, ValueError):
    """Malformed slowly-varying-function expression."""


class HypothesisError(MzlawError):
    """A structural hypothesis of a limit theorem fails on the scanned range."""


class PSDError(MzlawError, ValueError):
    """Equicorrelation matrix would not be positive semidefinite."""


class WeightSchemeError(MzlawError, ValueError):
    """A weight row violates the sum-of-squares bound."""


class ConfigError(MzlawError, ValueError):
    """Inconsistent experiment configuration."""


class MalformedPairError(MzlawError, ValueError):
    """A covariance test pair acts on overlapping index sets."""


class ConfigHypothesisError(ConfigError, HypothesisError):
    """Configuration contradicts a hypothesis of the targeted limit theorem."""

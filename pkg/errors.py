"""Exceptions raised by the simulator."""


class LrSchedError(Exception):
    """Base class for simulator errors."""


class MalformedInputError(LrSchedError, ValueError):
    """Inputs violate a precondition (dimension mismatch, non-positive epsilon, ...)."""


class LemmaInapplicableError(LrSchedError):
    """The eigenvalue-gap lemma cannot be applied to this instance."""


class ConfigError(LrSchedError):
    """Invalid configuration or instance file."""


class BoundViolationError(LrSchedError):
    """A realized loss violates an analytic bound whose hypotheses hold."""

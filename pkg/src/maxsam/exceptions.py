"""Exception hierarchy shared by every maxsam module."""


class MaxSamError(ValueError):
    """Base class for all errors raised by maxsam."""


class GraphFormatError(MaxSamError):
    """Malformed matrix or edge-list input, or a graph violating its invariants."""


class ConstraintError(MaxSamError):
    """A constraint set that violates parity, balance or model arity rules."""


class ModelMismatchError(MaxSamError):
    """A graph, constraint set or parameter set used with the wrong model."""


class DomainError(MaxSamError):
    """Hidden variables outside the region where the model is defined."""

"""Exception types shared across the package."""


class DpGmmError(Exception):
    """Base class for all dpgmm errors."""


class NotPositiveDefinite(DpGmmError):
    """A matrix required to be positive definite failed the Cholesky test."""


class DomainError(DpGmmError):
    """A scalar argument lies outside the function's domain."""


class ParseError(DpGmmError):
    """A dataset file is malformed; the message carries the line number."""


class EmptyClass(DpGmmError):
    """Some class label in 1..K has no members."""


class LabelOutOfRange(DpGmmError):
    """A label falls outside 1..K."""


class DegenerateClass(DpGmmError):
    """A class has fewer than two members, so its covariance is undefined."""


class ClipViolation(DpGmmError):
    """A feature vector exceeds the declared norm bound B."""


class InfeasibleBudget(DpGmmError):
    """The privacy budget split leaves no room for some noise term."""


class DegenerateAdjacency(DpGmmError):
    """A class has neither adjacency constraints nor a fallback bound."""


class NumericalFailure(DpGmmError):
    """An iterative solver failed to converge within its step budget."""


class SchemaMismatch(DpGmmError):
    """A JSON artifact does not match its schema; message names the field path."""

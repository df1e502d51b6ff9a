"""Exception hierarchy shared by every gaussnet module."""


class GaussNetError(Exception):
    """Base class for all library errors."""


class InvalidVariance(GaussNetError, ValueError):
    pass


class InvalidComponent(GaussNetError, ValueError):
    pass


class DiracEvaluation(GaussNetError):
    """A zero-variance component was evaluated pointwise."""


class DiracOnGrid(GaussNetError):
    """A mixture holding Dirac components was asked for grid values."""


class ZeroProduct(GaussNetError):
    """Two Dirac components at different points were multiplied."""


class DegenerateOverlap(GaussNetError):
    """Overlap integral of two Dirac components."""


class EmptyMixture(GaussNetError):
    """Every pairwise product in a mixture product vanished."""


class NormalizationFailure(GaussNetError):
    pass


class NotNormalized(GaussNetError):
    pass


class EmptyLikelihood(GaussNetError):
    """A likelihood product with no surviving component."""


class NetworkError(GaussNetError):
    """Structural or modelling error tied to a node."""

    def __init__(self, message: str, node: str | None = None):
        super().__init__(message)
        self.node = node


class DuplicateNodeId(NetworkError):
    pass


class UnknownParent(NetworkError):
    pass


class UnknownNode(NetworkError):
    pass


class ArityMismatch(NetworkError):
    pass


class RootWithoutPrior(NetworkError):
    pass


class PriorWithParents(NetworkError):
    pass


class DirectedCycle(NetworkError):
    pass


class UndirectedCycle(NetworkError):
    pass


class ContradictoryEvidence(NetworkError):
    pass


class InvalidTarget(GaussNetError, ValueError):
    pass


class InvalidFunction(GaussNetError, ValueError):
    pass


class UnsupportedArity(GaussNetError, ValueError):
    pass


class FitDiverged(GaussNetError):
    pass


class DocumentError(GaussNetError):
    """Malformed network document; carries a location when one is known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column

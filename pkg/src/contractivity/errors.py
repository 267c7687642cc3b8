"""Exception hierarchy shared by all modules."""


class ContractivityError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatch(ContractivityError, ValueError):
    pass


class SingularWeight(ContractivityError, ValueError):
    """Weight matrix R is singular or too ill-conditioned, or P is not positive definite."""


class NotContractive(ContractivityError):
    """The requested quantity needs a negative matrix measure / positive rate."""

    def __init__(self, message, rate=None):
        super().__init__(message)
        self.rate = rate


class InconsistentEvidence(ContractivityError):
    """Sampled Demidovich rate disagrees with the pairwise one-sided Lipschitz check."""


class WrongNormFamily(ContractivityError, ValueError):
    pass


class PreconditionViolated(ContractivityError):
    pass


class AntipodalPoints(ContractivityError, ValueError):
    """Points lie on each other's cut locus; the minimal geodesic is not unique."""


class ExpressionError(ContractivityError, ValueError):
    """Error in a vector-field expression, located by offset, line and column."""

    def __init__(self, message, source="", offset=0):
        self.offset = offset
        self.line = source.count("\n", 0, offset) + 1
        self.column = offset - (source.rfind("\n", 0, offset) + 1) + 1
        super().__init__(f"{message} (line {self.line}, column {self.column})")
        self.reason = message


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifier(ExpressionError):
    pass


class ArityMismatch(ExpressionError):
    pass

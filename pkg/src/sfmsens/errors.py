"""Exception hierarchy.

Every failure raised by the library derives from SfmError, so callers can
catch one type at the boundary (the CLI does exactly that).
"""


class SfmError(Exception):
    """Base class for all library errors."""


class ModelError(SfmError, ValueError):
    pass


class GeneratorRowSum(ModelError):
    pass


class SignPartitionMismatch(ModelError):
    pass


class NotIrreducible(ModelError):
    pass


class DimensionMismatch(SfmError, ValueError):
    pass


class InvalidPhaseType(ModelError):
    pass


class NegativeLoading(ModelError):
    pass


class NumericalError(SfmError, ArithmeticError):
    pass


class SingularSystem(NumericalError):
    pass


class SingularTabooBlock(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NullRecurrent(NumericalError):
    pass


class SpectraOverlap(NumericalError):
    pass


class UnstableModel(SfmError, ValueError):
    pass


class SingularK(NumericalError):
    pass


class SingularConstraintSystem(NumericalError):
    pass


class SingularPassageSystem(NumericalError):
    pass


class SingularRepeatFactor(NumericalError):
    pass


class InversionAccuracyLoss(NumericalError):
    pass

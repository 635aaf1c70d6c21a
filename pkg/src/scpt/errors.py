"""Exception types raised across the package.

Every error carries a CLI exit-code class: usage (1), data (2) or numerical (3).
"""


class SCPTError(Exception):
    exit_code = 2


class DataError(SCPTError):
    exit_code = 2


class NumericalError(SCPTError):
    exit_code = 3


class ShapeMismatch(DataError, ValueError):
    pass


class NonFiniteInput(NumericalError, ValueError):
    pass


class NonFinite(NumericalError, ArithmeticError):
    pass


class NonFiniteLoss(NumericalError, ArithmeticError):
    pass


class TooShort(DataError, ValueError):
    pass


class EmptyBand(DataError, ValueError):
    pass


class EmptyClip(DataError, ValueError):
    pass


class RankOutOfRange(DataError, ValueError):
    pass


class InvalidLabel(DataError, ValueError):
    pass


class ClipTooLong(DataError, ValueError):
    pass


class TooFewSubjects(DataError, ValueError):
    pass


class EmptyEvalSet(DataError, ValueError):
    pass


class DegenerateInput(DataError, ValueError):
    pass


class AllZero(DataError, ValueError):
    pass


class CorruptFile(DataError, OSError):
    pass


class VersionMismatch(DataError, OSError):
    pass


class ConfigError(DataError, ValueError):
    pass

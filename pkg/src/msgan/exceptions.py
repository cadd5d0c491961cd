"""Exception hierarchy shared by every module."""


class MsganError(Exception):
    """Base class for all library errors."""


class InvalidArgument(MsganError, ValueError):
    pass


class InvalidModel(MsganError, ValueError):
    pass


class InvalidStart(MsganError, ValueError):
    pass


class NumericalFailure(MsganError, ArithmeticError):
    pass


class FormatError(MsganError, ValueError):
    pass


class ConfigError(MsganError, ValueError):
    pass


class InfeasibleScenario(MsganError):
    pass


class TrainingDiverged(MsganError, ArithmeticError):
    pass


class NoGoalFound(MsganError):
    pass

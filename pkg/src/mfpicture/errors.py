"""Exception hierarchy shared by all modules."""


class MFPictureError(Exception):
    """Base class for every error raised by the package."""


# numeric kernel
class NumericError(MFPictureError):
    pass


class MaxStepsExceeded(NumericError):
    pass


class NonFiniteState(NumericError):
    pass


class MethodMismatch(NumericError):
    pass


class MaxDepthExceeded(NumericError):
    pass


class NonFiniteValue(NumericError):
    pass


class SingularMatrix(NumericError):
    pass


# system model
class NonFiniteDerivative(MFPictureError):
    pass


class NoConvergence(MFPictureError):
    pass


class SingularJacobian(MFPictureError):
    pass


class InsufficientSamples(MFPictureError):
    pass


class UnknownCatalogId(MFPictureError):
    pass


class InvalidParameter(MFPictureError):
    pass


# picture engines
class PathDisagreement(MFPictureError):
    pass


# configuration
class ConfigError(MFPictureError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(ConfigError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)

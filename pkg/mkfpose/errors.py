"""Exceptions raised by mkfpose"""


class MkfPoseError(Exception):
    """Base class of every error raised by the library."""


class ConfigError(MkfPoseError):
    """Invalid configuration key or value."""


class DataError(MkfPoseError, ValueError):
    """Input data does not match the expected schema or shape."""


class NumericalError(MkfPoseError, ArithmeticError):
    """A numerical operation failed (singular matrix, degenerate geometry...)."""


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ParseError(DataError):
    """Malformed file content, carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = 'line {}: {}'.format(line, message)
        super().__init__(message)
        self.line = line


class MissingJoint(DataError):
    """Unknown or missing joint name."""

    def __init__(self, message, joint=None):
        super().__init__(message)
        self.joint = joint


class NoVisibleJoints(DataError):
    pass


class ZeroLengthLimb(DataError):
    pass


class InsufficientData(DataError):
    pass


class SchemaError(DataError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularCamera(NumericalError):
    pass


class DegenerateProjection(NumericalError):
    pass


class SingularInnovation(NumericalError):
    pass


class AllWeightsZero(NumericalError):
    pass


class EmptyCluster(NumericalError):
    pass


class DegenerateConfiguration(NumericalError):
    pass


def with_context(err, context):
    r"""
    Build a copy of ``err`` whose message is prefixed with ``context``.

    Parameters
    ----------
    err : MkfPoseError
            Original exception.
    context : str
            Location prefix, e.g. ``'frame 12'``.

    Returns
    -------
    new_err : MkfPoseError
            Exception of the same class, to be raised ``from err``.
    """
    message = '{}: {}'.format(context, err)
    new_err = Exception.__new__(type(err))
    Exception.__init__(new_err, message)
    for key, value in vars(err).items():
        setattr(new_err, key, value)
    return new_err

"""Exception types raised across the package."""


class RHSError(Exception):
    """Base class for all package errors."""


class ZeroReceivePattern(RHSError):
    """All receive amplitudes are zero, so the SNR denominator vanishes."""


class InfeasiblePower(RHSError):
    """The transmit power equality cannot be met inside the [0, 1] box."""


class BadSampling(RHSError):
    """Sample rate below the chirp bandwidth."""


class OutOfRangeDelay(RHSError):
    """Requested delay lies outside the range-profile support."""


class SingularInnovationCov(RHSError):
    """Innovation covariance is not invertible."""


class EmptyCloud(RHSError):
    """Registration was asked to align an empty point cloud."""


class LengthMismatch(RHSError):
    """Estimate and truth arrays differ in length."""


class ConfigError(RHSError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """The configuration file is not valid JSON."""


class ValidationError(ConfigError):
    """A configuration field holds an invalid value.

    Parameters
    ----------
    field : str
        Dotted path of the offending field.
    message : str
        Human-readable reason.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")

"""Error hierarchy shared by every module.

Input problems exit the CLI with code 1, numerical failures with code 2.
"""
from typing import Optional


class HyperspecError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def as_dict(self) -> dict:
        """Structured form used for error reporting."""
        payload = {"error": type(self).__name__, "message": self.message}
        payload.update({k: v for k, v in self.context.items() if v is not None})
        return payload


class InputValidationError(HyperspecError):
    """Inputs violate a precondition."""

    exit_code = 1


class ComputationError(HyperspecError):
    """A numerical step could not produce a result."""

    exit_code = 2


# Validation family

class GridMismatchError(InputValidationError):
    """Spectra or cubes are on different wavelength grids."""


class UnitMismatchError(InputValidationError):
    """Spectral unit tag differs from the one required."""


class TargetOutOfRangeError(InputValidationError):
    """Resampling would require extrapolation."""


class BadWidthError(InputValidationError):
    """Smoothing width is even, zero or larger than the spectrum."""


class OutOfBoundsError(InputValidationError):
    """ROI lies outside the cube."""


class InsufficientStepsError(InputValidationError):
    """Fewer than two monochromator steps."""


class MissingCalibrationError(InputValidationError):
    """Irradiance-per-count calibration is absent."""


class OutOfWindowError(InputValidationError):
    """Timestamp is too far from the irradiance log."""


class PathValidationError(InputValidationError):
    """A referenced file does not exist."""


class ParseError(InputValidationError):
    """Malformed file content."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None, **context):
        super().__init__(message, line=line, source=source, **context)
        self.line = line
        self.source = source

    def __str__(self) -> str:
        where = []
        if self.source:
            where.append(str(self.source))
        if self.line is not None:
            where.append(f"line {self.line}")
        return f"{self.message} ({', '.join(where)})" if where else self.message


class BadMagicError(ParseError):
    """ENVI header does not start with `ENVI`."""


class MissingKeyError(ParseError):
    """Required ENVI header key is absent."""

    def __init__(self, key: str, **kwargs):
        super().__init__(f"Missing required header key '{key}'", key=key, **kwargs)
        self.key = key


class MalformedListError(ParseError):
    """Brace list cannot be parsed."""


class SizeMismatchError(ParseError):
    """Binary payload size disagrees with the header."""


class UnsupportedDataTypeError(ParseError):
    """ENVI data type code is not supported."""


class NonMonotoneWavelengthError(ParseError):
    """Wavelengths are not strictly increasing."""


class NonMonotoneTimeError(ParseError):
    """Timestamps repeat or decrease."""


class MissingMetadataKeyError(ParseError):
    """Signature record lacks a required metadata key."""


# Computation family

class ZeroVectorError(ComputationError):
    """Spectral angle of a zero vector."""


class EmptyRoiError(ComputationError):
    """No pixel left to average."""


class NoPeakError(ComputationError):
    """Band profile has no peak above the noise floor."""


class FitDivergedError(ComputationError):
    """Least-squares fit hit its iteration cap."""


class SaturatedProfileError(ComputationError):
    """Sweep frame contains samples at full scale."""


class ZeroResponsivityError(ComputationError):
    """Responsivity is zero inside the calibrated range."""


class ZeroIrradianceError(ComputationError):
    """Downwelling irradiance is zero at a used band."""


class DomainError(ComputationError):
    """Argument outside the domain of a physical formula."""


class ReflectanceRangeError(ComputationError):
    """Retrieved reflectance outside [0, clip_max] with clipping disabled."""

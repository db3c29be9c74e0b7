"""Spectral resampling, smoothing and comparison metrics."""
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from core.exceptions import (
    BadWidthError,
    EmptyRoiError,
    GridMismatchError,
    TargetOutOfRangeError,
    UnitMismatchError,
    ZeroVectorError,
)
from core.logging import get_logger
from schemas.quality import Roi
from schemas.spectral import HyperCube, Spectrum, WavelengthGrid

logger = get_logger(__name__)


def require_same_grid(a: WavelengthGrid, b: WavelengthGrid, what: str = "spectra"):
    """Raise GridMismatchError unless both grids are identical."""
    if not a.same_as(b):
        raise GridMismatchError(
            f"{what} are on different wavelength grids",
            lengths=(len(a), len(b)),
        )


def require_unit(actual, expected, what: str = "input"):
    if actual != expected:
        raise UnitMismatchError(
            f"{what} has unit {actual.value}, expected {expected.value}"
        )


def resample(src: Spectrum, target: WavelengthGrid) -> Spectrum:
    """
    Piecewise-linear resampling onto another grid.

    Args:
        src: Spectrum with at least two bands
        target: Grid lying inside the source range

    Returns:
        Spectrum on `target` with the source unit

    Raises:
        TargetOutOfRangeError: If any target wavelength needs extrapolation
    """
    if len(src.grid) < 2:
        raise TargetOutOfRangeError("resampling needs a source grid of at least two bands")
    if target.first < src.grid.first or target.last > src.grid.last:
        raise TargetOutOfRangeError(
            f"target [{target.first}, {target.last}] nm outside source "
            f"[{src.grid.first}, {src.grid.last}] nm"
        )
    if target.same_as(src.grid):
        return src
    values = np.interp(target.wavelengths_nm, src.grid.wavelengths_nm, src.values)
    return Spectrum(grid=target, values=values, unit=src.unit)


def _unit_vector(values: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(values)
    if norm == 0:
        raise ZeroVectorError("spectral angle is undefined for a zero spectrum")
    return values / norm


def spectral_angle(a: Spectrum, b: Spectrum) -> float:
    """
    Angle in radians between two spectra viewed as vectors.

    Evaluated as 2*atan2(|a' - b'|, |a' + b'|) on unit vectors, which equals
    arccos(<a,b>/(|a||b|)) and stays accurate near 0 and pi.
    """
    require_same_grid(a.grid, b.grid)
    ua = _unit_vector(a.values)
    ub = _unit_vector(b.values)
    angle = 2.0 * np.arctan2(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub))
    return float(np.clip(angle, 0.0, np.pi))


def rmse(a: Spectrum, b: Spectrum) -> float:
    """Root-mean-square difference of two spectra on one grid."""
    require_same_grid(a.grid, b.grid)
    require_unit(b.unit, a.unit, "second spectrum")
    diff = a.values - b.values
    return float(np.sqrt(np.mean(diff * diff)))


def box_smooth(s: Spectrum, width: int) -> Spectrum:
    """
    Moving-average smoothing with replicated end samples.

    Args:
        s: Input spectrum
        width: Odd window length, 1 <= width <= len(s)

    Returns:
        Smoothed spectrum, same length and unit
    """
    if width < 1 or width % 2 == 0 or width > len(s.grid):
        raise BadWidthError(f"smoothing width must be odd and in [1, {len(s.grid)}], got {width}")
    if width == 1:
        return s
    smoothed = uniform_filter1d(s.values, size=width, mode="nearest")
    return s.with_values(smoothed)


def roi_mean_spectrum(
    cube: HyperCube,
    roi: Roi,
    mask: Optional[np.ndarray] = None,
) -> Spectrum:
    """
    Per-band mean over the kept pixels of an ROI.

    Args:
        cube: Source cube
        roi: Region of interest
        mask: Optional rows x cols keep-flags; False pixels are excluded

    Returns:
        Mean spectrum in the cube's unit
    """
    selected = roi.pixel_mask(cube.rows, cube.cols)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (cube.rows, cube.cols):
            raise GridMismatchError("mask shape does not match the cube")
        selected = selected & mask
    count = int(selected.sum())
    if count == 0:
        raise EmptyRoiError(f"ROI '{roi.name}' has no kept pixels", roi=roi.name)
    mean = cube.data[selected].mean(axis=0)
    logger.debug("Computed ROI mean", roi=roi.name, pixels=count)
    return Spectrum(grid=cube.grid, values=mean, unit=cube.unit)

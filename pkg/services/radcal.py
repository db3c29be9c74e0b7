"""Field pipeline: dark correction, counts to radiance, radiance to reflectance."""
from typing import Dict, Optional, Union

import numpy as np

from core.config import settings
from core.exceptions import (
    MissingCalibrationError,
    OutOfWindowError,
    ReflectanceRangeError,
    UnitMismatchError,
    ZeroIrradianceError,
)
from core.logging import get_logger
from core.parallel import map_row_blocks
from schemas.calibration import CalibrationConfig
from schemas.quality import Roi, RoiReport
from schemas.records import SignatureRecord
from schemas.spectral import HyperCube, IrradianceSeries, Spectrum, SpectralUnit
from services.spectral import box_smooth, require_same_grid, require_unit, roi_mean_spectrum

logger = get_logger(__name__)


def dark_correct(cube: HyperCube, dark: Spectrum, workers: Optional[int] = None) -> HyperCube:
    """
    Subtract the dark frame from every pixel, clamping at zero.

    Args:
        cube: Raw cube in digital counts
        dark: Dark frame on the cube's grid

    Returns:
        Dark-corrected cube, still in digital counts
    """
    require_unit(cube.unit, SpectralUnit.DIGITAL_COUNT, "cube")
    require_unit(dark.unit, SpectralUnit.DIGITAL_COUNT, "dark frame")
    require_same_grid(cube.grid, dark.grid, "cube and dark frame")

    def subtract(block, _first_row):
        return np.clip(block - dark.values, 0.0, None)

    corrected = map_row_blocks(subtract, cube.data, workers)
    return cube.with_data(corrected, bit_depth=cube.bit_depth)


def dc_to_radiance(cube: HyperCube, cfg: CalibrationConfig, workers: Optional[int] = None) -> HyperCube:
    """
    Sensor-reaching radiance L = DC * (E/DC) / pi.

    Args:
        cube: Dark-corrected cube in digital counts
        cfg: Calibration with irradiance per count

    Returns:
        Radiance cube
    """
    require_unit(cube.unit, SpectralUnit.DIGITAL_COUNT, "cube")
    if cfg.e_per_dc is None:
        raise MissingCalibrationError("irradiance per count is required to compute radiance")
    require_same_grid(cube.grid, cfg.e_per_dc.grid, "cube and calibration")
    e_per_dc = cfg.e_per_dc.values

    def convert(block, _first_row):
        return block * e_per_dc / np.pi

    radiance = map_row_blocks(convert, cube.data, workers)
    return cube.with_data(radiance, unit=SpectralUnit.RADIANCE)


def flat_field(cube: HyperCube, responsivity: Spectrum, workers: Optional[int] = None) -> HyperCube:
    """
    Divide dark-corrected counts by the relative responsivity.

    The result needs the same incident power per count in every band, which
    is enough for applications that do not need absolute units.
    """
    require_unit(cube.unit, SpectralUnit.DIGITAL_COUNT, "cube")
    require_unit(responsivity.unit, SpectralUnit.RESPONSIVITY, "responsivity")
    require_same_grid(cube.grid, responsivity.grid, "cube and responsivity")

    def divide(block, _first_row):
        return block / responsivity.values

    corrected = map_row_blocks(divide, cube.data, workers)
    return cube.with_data(corrected, unit=SpectralUnit.CORRECTED_COUNT)


def _reflectance_values(radiance: np.ndarray, downwelling: np.ndarray, cfg: CalibrationConfig) -> np.ndarray:
    if cfg.eq6_as_printed:
        return radiance * downwelling / np.pi
    return np.pi * radiance / (downwelling * cfg.incidence_cos)


def enforce_reflectance_range(values: np.ndarray, cfg: CalibrationConfig) -> np.ndarray:
    """
    Apply the [0, clip_max] reflectance range.

    Values above 1 are logged as possible glint. With `cfg.clip_reflectance`
    the values are clipped into range, otherwise anything outside it raises.
    """
    above_one = int(np.count_nonzero(values > 1.0))
    if above_one:
        logger.warning("Reflectance above 1 (possible glint)", samples=above_one, clip_max=cfg.clip_max)
    if cfg.clip_reflectance:
        return np.clip(values, 0.0, cfg.clip_max)
    outside = int(np.count_nonzero((values < 0.0) | (values > cfg.clip_max)))
    if outside:
        raise ReflectanceRangeError(
            f"{outside} reflectance value(s) outside [0, {cfg.clip_max}]; enable clipping to keep them",
            samples=outside,
            min=float(values.min()),
            max=float(values.max()),
            clip_max=cfg.clip_max,
        )
    return values


def radiance_to_reflectance(
    data: Union[HyperCube, Spectrum],
    downwelling: Spectrum,
    cfg: CalibrationConfig,
    workers: Optional[int] = None,
) -> Union[HyperCube, Spectrum]:
    """
    Lambertian reflectance rho = pi * L / (E_downwell * cos(theta)).

    With `cfg.eq6_as_printed` the literal L * E / pi form is used instead.

    Args:
        data: Radiance cube or spectrum
        downwelling: Downwelling irradiance on the same grid
        cfg: Calibration configuration (incidence, clipping)

    Returns:
        Same shape as `data`, in reflectance units
    """
    require_unit(data.unit, SpectralUnit.RADIANCE, "input")
    require_unit(downwelling.unit, SpectralUnit.IRRADIANCE, "downwelling")
    require_same_grid(data.grid, downwelling.grid, "radiance and downwelling")
    zero = np.flatnonzero(downwelling.values <= 0)
    if zero.size:
        raise ZeroIrradianceError(
            f"downwelling irradiance is zero at {zero.size} band(s)",
            first_band=int(zero[0]),
        )
    e_down = downwelling.values

    if isinstance(data, Spectrum):
        rho = enforce_reflectance_range(_reflectance_values(data.values, e_down, cfg), cfg)
        return data.with_values(rho, unit=SpectralUnit.REFLECTANCE)

    def convert(block, _first_row):
        return _reflectance_values(block, e_down, cfg)

    rho = enforce_reflectance_range(map_row_blocks(convert, data.data, workers), cfg)
    return data.with_data(rho, unit=SpectralUnit.REFLECTANCE)


def match_irradiance(series: IrradianceSeries, t: float, window_s: Optional[float] = None) -> Spectrum:
    """
    Downwelling spectrum at time `t` by linear interpolation in time.

    Outside the log, the nearest endpoint is used when it lies within
    `window_s` seconds.
    """
    window_s = settings.irradiance_window_s if window_s is None else window_s
    if len(series) == 0:
        raise OutOfWindowError("irradiance log is empty")
    times = series.timestamps

    if t <= times[0] or t >= times[-1]:
        endpoint = 0 if t <= times[0] else len(series) - 1
        gap = abs(t - times[endpoint])
        if gap > window_s:
            raise OutOfWindowError(
                f"timestamp {t} s is {gap:.3f} s outside the irradiance log",
                timestamp=t,
                window_s=window_s,
            )
        if gap > 0:
            logger.warning("Clamped irradiance to log endpoint", timestamp=t, gap_s=gap)
        return series.samples[endpoint].spectrum

    hi = int(np.searchsorted(times, t, side="left"))
    if times[hi] == t:
        return series.samples[hi].spectrum
    lo = hi - 1
    weight = (t - times[lo]) / (times[hi] - times[lo])
    e_lo = series.samples[lo].spectrum
    e_hi = series.samples[hi].spectrum
    values = e_lo.values + weight * (e_hi.values - e_lo.values)
    return e_lo.with_values(values)


def extract_signature(
    cube: HyperCube,
    roi: Roi,
    mask: Optional[np.ndarray],
    metadata: Dict[str, str],
    cfg: CalibrationConfig,
    timestamp_s: float = 0.0,
    report: Optional[RoiReport] = None,
) -> SignatureRecord:
    """
    Mean reflectance of the kept ROI pixels, box-smoothed and packaged.

    Args:
        cube: Reflectance cube
        roi: Region to average
        mask: Optional rows x cols keep-flags (e.g. from `RoiReport.keep_mask`)
        metadata: Free-form key/values such as make, model and color
        cfg: Provides the smoothing width and the reflectance range
        timestamp_s: Acquisition time of the ROI
        report: Screening report summarized into the record

    Returns:
        SignatureRecord
    """
    if cube.unit != SpectralUnit.REFLECTANCE:
        raise UnitMismatchError(f"signatures are extracted from reflectance cubes, got {cube.unit.value}")
    mean = roi_mean_spectrum(cube, roi, mask)
    smoothed = box_smooth(mean, cfg.smoothing_width)
    smoothed = smoothed.with_values(enforce_reflectance_range(smoothed.values, cfg))
    record_metadata = {"name": roi.name, **metadata}
    logger.info(
        "Extracted signature",
        roi=roi.name,
        name=record_metadata["name"],
        smoothing_width=cfg.smoothing_width,
    )
    return SignatureRecord(
        reflectance=smoothed,
        roi=roi,
        timestamp_s=timestamp_s,
        metadata=record_metadata,
        quality=report.summary() if report is not None else None,
    )

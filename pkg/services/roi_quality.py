"""ROI pixel screening for glint, saturation, shadow and adjacency effects."""
from typing import List, Optional

import numpy as np

from core.exceptions import EmptyRoiError, ZeroVectorError
from core.logging import get_logger
from schemas.quality import PixelFlags, QualityThresholds, Roi, RoiReport
from schemas.spectral import HyperCube, SensorModel, Spectrum, SpectralUnit
from services.spectral import require_same_grid, require_unit, spectral_angle

logger = get_logger(__name__)

# inclusive brightness boundaries tolerate rounding in the broadband mean
BOUNDARY_RTOL = 1e-12


class RoiScreener:
    """Flag ROI pixels that do not show the paint under downwelling light."""

    def __init__(self, thresholds: Optional[QualityThresholds] = None):
        """
        Initialize the screener.

        Args:
            thresholds: Detector thresholds; configured defaults when omitted
        """
        self.thresholds = thresholds or QualityThresholds.from_settings()
        self.logger = get_logger(f"{__name__}.screener")

    def detect_saturation(self, cube: HyperCube, sensor: SensorModel) -> np.ndarray:
        """
        Pixels with any band at or above sat_frac * max_dc.

        Args:
            cube: Raw cube in digital counts
            sensor: Provides the bit depth

        Returns:
            rows x cols boolean array
        """
        require_unit(cube.unit, SpectralUnit.DIGITAL_COUNT, "saturation input")
        limit = self.thresholds.sat_frac * sensor.max_dc
        return np.any(cube.data >= limit, axis=2)

    def detect_glint(self, pixel: Spectrum, downwelling: Spectrum, roi_median: Spectrum) -> bool:
        """
        Source-shaped and much brighter than the ROI median.

        Args:
            pixel: Pixel spectrum
            downwelling: Illumination spectrum on the same grid
            roi_median: Per-band ROI median

        Returns:
            True if the pixel looks like a specular reflection of the source
        """
        require_same_grid(pixel.grid, roi_median.grid)
        angle = spectral_angle(pixel, downwelling)
        if angle >= self.thresholds.glint_angle_max:
            return False
        limit = self.thresholds.glint_bright_ratio * roi_median.broadband_mean()
        return pixel.broadband_mean() >= limit * (1.0 - BOUNDARY_RTOL)

    def detect_shadow(self, pixel: Spectrum, roi_median: Spectrum) -> bool:
        """Broadband mean at or below shadow_ratio times the ROI median's."""
        require_same_grid(pixel.grid, roi_median.grid)
        limit = self.thresholds.shadow_ratio * roi_median.broadband_mean()
        return pixel.broadband_mean() <= limit * (1.0 + BOUNDARY_RTOL)

    def detect_adjacency(
        self,
        pixel: Spectrum,
        roi_median: Spectrum,
        downwelling: Optional[Spectrum] = None,
    ) -> bool:
        """
        Shape deviation from the ROI median at normal brightness.

        A pixel already explained as shadow (or as glint, when `downwelling`
        is given) is not an adjacency pixel.
        """
        if spectral_angle(pixel, roi_median) <= self.thresholds.adj_angle_min:
            return False
        if self.detect_shadow(pixel, roi_median):
            return False
        if downwelling is not None and self.detect_glint(pixel, downwelling, roi_median):
            return False
        return True

    def score_roi(
        self,
        cube: HyperCube,
        roi: Roi,
        downwelling: Spectrum,
        sensor: SensorModel,
        dc_cube: Optional[HyperCube] = None,
    ) -> RoiReport:
        """
        Run all detectors over an ROI.

        Shape and brightness detectors run on `cube`. Saturation runs on
        `dc_cube` when given, otherwise on `cube` if it is in digital counts.

        Args:
            cube: Cube used for shape tests (radiance or counts)
            roi: Region of interest
            downwelling: Illumination spectrum on the cube grid
            sensor: Sensor model (bit depth)
            dc_cube: Raw counts for the saturation test

        Returns:
            RoiReport with per-pixel flags and the kept fraction
        """
        require_same_grid(cube.grid, downwelling.grid, "cube and downwelling")
        pixels = roi.pixels(cube.rows, cube.cols)
        if pixels.shape[0] == 0:
            raise EmptyRoiError(f"ROI '{roi.name}' contains no pixels", roi=roi.name)

        notes: List[str] = []
        saturation_source = dc_cube
        if saturation_source is None and cube.unit == SpectralUnit.DIGITAL_COUNT:
            saturation_source = cube
        if saturation_source is not None:
            saturated_map = self.detect_saturation(saturation_source, sensor)
        else:
            saturated_map = np.zeros((cube.rows, cube.cols), dtype=bool)
            notes.append("saturation check skipped: no digital-count cube")

        spectra = cube.data[pixels[:, 0], pixels[:, 1]]
        median = Spectrum(grid=cube.grid, values=np.median(spectra, axis=0), unit=cube.unit)

        flags: List[PixelFlags] = []
        for (row, col), values in zip(pixels, spectra):
            pixel = Spectrum(grid=cube.grid, values=values, unit=cube.unit)
            saturated = bool(saturated_map[row, col])
            shadow = self.detect_shadow(pixel, median)
            try:
                glint = saturated or (not shadow and self.detect_glint(pixel, downwelling, median))
                adjacency = not (glint or shadow) and self.detect_adjacency(pixel, median)
            except ZeroVectorError:
                glint, adjacency = saturated, False
            flags.append(PixelFlags(saturated=saturated, glint=glint, shadow=shadow, adjacency=adjacency))

        total = len(flags)
        kept = sum(1 for f in flags if f.clean)
        if kept == 0:
            notes.append("no clean pixels left in ROI")
        glinted = sum(1 for f in flags if f.glint)
        if glinted:
            notes.append(f"{glinted} glint pixel(s) excluded")

        report = RoiReport(
            roi=roi,
            pixels=pixels,
            flags=flags,
            kept_fraction=kept / total,
            median_spectrum=median,
            notes=notes,
        )
        self.logger.info(
            "Scored ROI",
            roi=roi.name,
            pixels=total,
            kept_fraction=report.kept_fraction,
            **report.flag_counts(),
        )
        return report

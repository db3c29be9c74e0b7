"""Pydantic models for the monochromator calibration chain."""
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import settings
from schemas.spectral import ArrayModel, HyperCube, SensorModel, Spectrum, SpectralUnit, frozen_array


class MonochromatorStep(ArrayModel):
    """One monochromator setting and the frame captured under it."""

    lambda_nm: float = Field(..., gt=0)
    frame: HyperCube
    flux_ref_w: float = Field(..., gt=0)
    exposure_ref_s: float = Field(..., gt=0)
    bandwidth_ref_nm: float = Field(..., gt=0)
    source: Optional[Path] = None

    @model_validator(mode="after")
    def _check_frame(self):
        if self.frame.unit != SpectralUnit.DIGITAL_COUNT:
            raise ValueError("sweep frames must be in digital counts")
        return self


class GaussianFit(BaseModel):
    """Fitted band profile A*exp(-(i-mu)^2/(2 sigma^2)) + baseline."""

    model_config = ConfigDict(frozen=True)

    amplitude_dc: float = Field(..., gt=0)
    center_band: float = Field(..., ge=0)
    sigma_bands: float = Field(..., gt=0)
    baseline_dc: float = 0.0
    residual_rms: float = Field(..., ge=0)
    iterations: int = 0


class StepFit(BaseModel):
    """Fit result attached to its monochromator setting."""

    model_config = ConfigDict(frozen=True)

    lambda_nm: float
    flux_ref_w: float
    fit: GaussianFit

    @property
    def responsivity(self) -> float:
        """Dark-corrected counts per watt at this wavelength."""
        return self.fit.amplitude_dc / self.flux_ref_w


class ResponsivityCurve(ArrayModel):
    """Per-step fits and the normalized responsivity on the sensor grid."""

    fits: List[StepFit]
    relative: Spectrum

    @model_validator(mode="after")
    def _check_relative(self):
        if self.relative.unit != SpectralUnit.RESPONSIVITY:
            raise ValueError("relative curve must carry the responsivity unit")
        if self.relative.values.max() != 1.0:
            raise ValueError("relative responsivity maximum must be exactly 1")
        if np.any(self.relative.values <= 0):
            raise ValueError("relative responsivity must be positive inside the swept range")
        return self


class ReferenceParameters(ArrayModel):
    """Laboratory acquisition parameters resolved per sensor band."""

    flux_ref_w: np.ndarray
    exposure_ref_s: np.ndarray
    bandwidth_ref_nm: np.ndarray

    @field_validator("flux_ref_w", "exposure_ref_s", "bandwidth_ref_nm", mode="before")
    @classmethod
    def _positive(cls, v):
        arr = frozen_array(np.atleast_1d(v), ndim=1)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise ValueError("reference parameters must be finite and positive")
        return arr

    @classmethod
    def uniform(cls, bands: int, flux_ref_w: float, exposure_ref_s: float, bandwidth_ref_nm: float):
        return cls(
            flux_ref_w=np.full(bands, flux_ref_w),
            exposure_ref_s=np.full(bands, exposure_ref_s),
            bandwidth_ref_nm=np.full(bands, bandwidth_ref_nm),
        )

    @model_validator(mode="after")
    def _same_length(self):
        sizes = {self.flux_ref_w.size, self.exposure_ref_s.size, self.bandwidth_ref_nm.size}
        if len(sizes) != 1:
            raise ValueError("reference parameters must have one value per band")
        return self


class CalibrationConfig(ArrayModel):
    """Everything the field pipeline needs to go from counts to reflectance."""

    sensor: SensorModel
    e_per_dc: Optional[Spectrum] = None
    incidence_cos: float = Field(default=1.0, gt=0, le=1)
    exposure_ratio_inverted: bool = False
    smoothing_width: int = Field(default=5, ge=1)
    eq6_as_printed: bool = False
    clip_reflectance: bool = False
    clip_max: float = Field(default=1.5, gt=0)

    @model_validator(mode="after")
    def _check_e_per_dc(self):
        if self.e_per_dc is not None and not self.e_per_dc.grid.same_as(self.sensor.grid):
            raise ValueError("irradiance-per-count must be on the sensor grid")
        if self.smoothing_width % 2 == 0:
            raise ValueError("smoothing width must be odd")
        return self

    @classmethod
    def from_settings(cls, sensor: SensorModel, e_per_dc: Optional[Spectrum] = None, config=None):
        config = config or settings
        return cls(
            sensor=sensor,
            e_per_dc=e_per_dc,
            incidence_cos=config.incidence_cos,
            exposure_ratio_inverted=config.exposure_ratio_inverted,
            smoothing_width=config.smoothing_width,
            eq6_as_printed=config.eq6_as_printed,
            clip_reflectance=config.clip_reflectance,
            clip_max=config.clip_max,
        )

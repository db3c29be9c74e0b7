"""Pydantic models for the Lambertian scene simulator."""
from typing import List, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from schemas.spectral import ArrayModel, HyperCube, Spectrum, SpectralUnit, frozen_array

MATERIAL_REFLECTANCE_MAX = 1.5


class Material(ArrayModel):
    """Named reflectance signature."""

    name: str = Field(..., min_length=1)
    reflectance: Spectrum

    @model_validator(mode="after")
    def _check_reflectance(self):
        if self.reflectance.unit != SpectralUnit.REFLECTANCE:
            raise ValueError("material reflectance must be unitless reflectance")
        values = self.reflectance.values
        if np.any(values < 0) or np.any(values > MATERIAL_REFLECTANCE_MAX):
            raise ValueError(f"material reflectance must lie in [0, {MATERIAL_REFLECTANCE_MAX}]")
        return self


class SceneSpec(ArrayModel):
    """Per-pixel material assignment with optional incidence cosines."""

    rows: int = Field(..., gt=0)
    cols: int = Field(..., gt=0)
    material_map: np.ndarray
    materials: List[Material]
    incidence_cos: Optional[np.ndarray] = None

    @field_validator("material_map", mode="before")
    @classmethod
    def _validate_map(cls, v):
        return frozen_array(v, dtype=np.int64, ndim=2)

    @field_validator("incidence_cos", mode="before")
    @classmethod
    def _validate_cos(cls, v):
        if v is None:
            return None
        cos = frozen_array(v, ndim=2)
        if np.any(cos <= 0) or np.any(cos > 1):
            raise ValueError("incidence cosines must lie in (0, 1]")
        return cos

    @model_validator(mode="after")
    def _check_scene(self):
        if self.material_map.shape != (self.rows, self.cols):
            raise ValueError("material map shape must be rows x cols")
        if not self.materials:
            raise ValueError("scene needs at least one material")
        if self.material_map.min() < 0 or self.material_map.max() >= len(self.materials):
            raise ValueError("material index out of range")
        if self.incidence_cos is not None and self.incidence_cos.shape != (self.rows, self.cols):
            raise ValueError("incidence cosine map shape must be rows x cols")
        grid = self.materials[0].reflectance.grid
        if any(not m.reflectance.grid.same_as(grid) for m in self.materials):
            raise ValueError("all materials must share one grid")
        return self

    @property
    def grid(self):
        return self.materials[0].reflectance.grid

    def cos_map(self) -> np.ndarray:
        if self.incidence_cos is None:
            return np.ones((self.rows, self.cols))
        return self.incidence_cos

    def reflectance_cube(self) -> np.ndarray:
        """rows x cols x bands reflectance lookup."""
        palette = np.stack([m.reflectance.values for m in self.materials])
        return palette[self.material_map]


class IlluminationScenario(ArrayModel):
    """Named downwelling irradiance condition."""

    name: str = Field(..., min_length=1)
    downwelling: Spectrum

    @model_validator(mode="after")
    def _check_downwelling(self):
        if self.downwelling.unit != SpectralUnit.IRRADIANCE:
            raise ValueError("scenario downwelling must be irradiance")
        if np.any(self.downwelling.values < 0):
            raise ValueError("downwelling irradiance must be non-negative")
        return self


class NoiseModel(ArrayModel):
    """Photon shot-noise settings."""

    enable_poisson: bool = False
    seed: int = 0
    quantum_efficiency: Optional[Spectrum] = None
    normal_threshold: float = Field(default=1000.0, gt=0)

    @model_validator(mode="after")
    def _check_qe(self):
        qe = self.quantum_efficiency
        if qe is not None and (np.any(qe.values <= 0) or np.any(qe.values > 1)):
            raise ValueError("quantum efficiency must lie in (0, 1]")
        if self.enable_poisson and qe is None:
            raise ValueError("Poisson noise needs a quantum efficiency curve")
        return self


class RenderedScenario(ArrayModel):
    """Output of one scenario render."""

    name: str
    radiance: HyperCube
    counts: Optional[HyperCube] = None

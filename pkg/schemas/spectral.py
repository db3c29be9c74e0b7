"""Pydantic models for spectral data: grids, spectra, sensors, cubes."""
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import constants as codata

from core.config import settings


def frozen_array(value, dtype=np.float64, ndim: Optional[int] = None) -> np.ndarray:
    """Copy `value` into a read-only array of the given dtype."""
    arr = np.array(value, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class SpectralUnit(str, Enum):
    """Unit tag carried by every spectrum and cube."""

    DIGITAL_COUNT = "DigitalCount"
    RADIANCE = "Radiance_W_m2_sr_nm"
    IRRADIANCE = "Irradiance_W_m2_nm"
    REFLECTANCE = "Reflectance_unitless"
    RESPONSIVITY = "Responsivity_relative"
    FLUX = "Flux_W"
    CORRECTED_COUNT = "CorrectedCount"


class Interleave(str, Enum):
    """Band interleave of a cube on disk."""

    BSQ = "bsq"
    BIL = "bil"
    BIP = "bip"


class ArrayModel(BaseModel):
    """Immutable model holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class WavelengthGrid(ArrayModel):
    """Strictly increasing band centers in nanometres."""

    wavelengths_nm: np.ndarray

    @field_validator("wavelengths_nm", mode="before")
    @classmethod
    def _validate_wavelengths(cls, v):
        wl = frozen_array(v, ndim=1)
        if wl.size == 0:
            raise ValueError("wavelength grid is empty")
        if not np.all(np.isfinite(wl)) or np.any(wl <= 0):
            raise ValueError("wavelengths must be finite and positive")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        return wl

    @classmethod
    def linear(cls, start_nm: float, stop_nm: float, bands: int) -> "WavelengthGrid":
        """Evenly spaced grid including both end points."""
        return cls(wavelengths_nm=np.linspace(start_nm, stop_nm, bands))

    def __len__(self) -> int:
        return int(self.wavelengths_nm.size)

    @property
    def first(self) -> float:
        return float(self.wavelengths_nm[0])

    @property
    def last(self) -> float:
        return float(self.wavelengths_nm[-1])

    def same_as(self, other: "WavelengthGrid") -> bool:
        """Exact element-wise equality."""
        return self is other or np.array_equal(self.wavelengths_nm, other.wavelengths_nm)

    def nearest_band(self, wavelength_nm: float) -> int:
        """Index of the band center closest to `wavelength_nm`."""
        return int(np.argmin(np.abs(self.wavelengths_nm - wavelength_nm)))

    def fractional_index(self, wavelength_nm: float) -> float:
        """Band position of `wavelength_nm` by linear interpolation of the centers."""
        return float(np.interp(wavelength_nm, self.wavelengths_nm, np.arange(len(self), dtype=float)))


class Spectrum(ArrayModel):
    """One spectral curve on a wavelength grid."""

    grid: WavelengthGrid
    values: np.ndarray
    unit: SpectralUnit

    @field_validator("values", mode="before")
    @classmethod
    def _validate_values(cls, v):
        values = frozen_array(v, ndim=1)
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        return values

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.size != len(self.grid):
            raise ValueError(
                f"values length {self.values.size} does not match grid length {len(self.grid)}"
            )
        return self

    @classmethod
    def from_arrays(cls, wavelengths_nm, values, unit: SpectralUnit) -> "Spectrum":
        return cls(grid=WavelengthGrid(wavelengths_nm=wavelengths_nm), values=values, unit=unit)

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return self.grid.wavelengths_nm

    def with_values(self, values, unit: Optional[SpectralUnit] = None) -> "Spectrum":
        """New spectrum on the same grid."""
        return Spectrum(grid=self.grid, values=values, unit=unit or self.unit)

    def broadband_mean(self) -> float:
        return float(np.mean(self.values))


class SensorModel(ArrayModel):
    """Pushbroom imaging spectrometer parameters."""

    grid: WavelengthGrid
    bandwidths_nm: np.ndarray
    bit_depth: int = Field(..., ge=8, le=16)
    exposure_s: float = Field(..., gt=0)
    ifov_rad: float = Field(..., gt=0)
    gsd_m: float = Field(..., gt=0)
    dark_frame: Spectrum
    responsivity: Optional[Spectrum] = None

    @field_validator("bandwidths_nm", mode="before")
    @classmethod
    def _validate_bandwidths(cls, v):
        widths = frozen_array(v, ndim=1)
        if np.any(widths <= 0) or not np.all(np.isfinite(widths)):
            raise ValueError("bandwidths must be finite and positive")
        return widths

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.bandwidths_nm.size != len(self.grid):
            raise ValueError("one bandwidth per band is required")
        if self.dark_frame.unit != SpectralUnit.DIGITAL_COUNT:
            raise ValueError("dark frame must be in digital counts")
        if not self.dark_frame.grid.same_as(self.grid):
            raise ValueError("dark frame must be on the sensor grid")
        if self.responsivity is not None:
            resp = self.responsivity
            if resp.unit != SpectralUnit.RESPONSIVITY or not resp.grid.same_as(self.grid):
                raise ValueError("responsivity must be relative and on the sensor grid")
            if np.any(resp.values <= 0) or np.any(resp.values > 1) or resp.values.max() != 1.0:
                raise ValueError("relative responsivity must lie in (0, 1] with maximum exactly 1")
        return self

    @property
    def max_dc(self) -> int:
        return 2 ** self.bit_depth - 1

    @property
    def bands(self) -> int:
        return len(self.grid)

    def with_responsivity(self, responsivity: Spectrum) -> "SensorModel":
        return SensorModel(**{**self.__dict__, "responsivity": responsivity})

    def with_dark_frame(self, dark_frame: Spectrum) -> "SensorModel":
        return SensorModel(**{**self.__dict__, "dark_frame": dark_frame})

    @classmethod
    def from_settings(cls, config=None, grid: Optional[WavelengthGrid] = None) -> "SensorModel":
        """
        Sensor defaults from configuration.

        Band centers are evenly spaced unless `grid` is given; bandwidths are
        the local band spacing.
        """
        config = config or settings
        if grid is None:
            grid = WavelengthGrid.linear(
                config.sensor_wavelength_min_nm,
                config.sensor_wavelength_max_nm,
                config.sensor_bands,
            )
        wl = grid.wavelengths_nm
        widths = np.gradient(wl) if wl.size > 1 else np.ones(1)
        return cls(
            grid=grid,
            bandwidths_nm=widths,
            bit_depth=config.sensor_bit_depth,
            exposure_s=config.sensor_exposure_s,
            ifov_rad=config.sensor_ifov_rad,
            gsd_m=config.sensor_gsd_m,
            dark_frame=Spectrum(
                grid=grid,
                values=np.full(len(grid), config.sensor_dark_level_dc),
                unit=SpectralUnit.DIGITAL_COUNT,
            ),
        )


class HyperCube(ArrayModel):
    """rows x cols x bands raster; always band-last in memory."""

    rows: int = Field(..., gt=0)
    cols: int = Field(..., gt=0)
    grid: WavelengthGrid
    unit: SpectralUnit
    data: np.ndarray
    interleave: Interleave = Interleave.BIL
    bit_depth: Optional[int] = Field(default=None, ge=8, le=16)

    @field_validator("data", mode="before")
    @classmethod
    def _validate_data(cls, v):
        return frozen_array(v, ndim=3)

    @model_validator(mode="after")
    def _check_extent(self):
        expected = (self.rows, self.cols, len(self.grid))
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} does not match {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube samples must be finite")
        if self.unit == SpectralUnit.DIGITAL_COUNT:
            if np.any(self.data < 0):
                raise ValueError("digital counts must be non-negative")
            if self.bit_depth is not None and np.any(self.data > 2 ** self.bit_depth - 1):
                raise ValueError(f"digital counts exceed {2 ** self.bit_depth - 1}")
        return self

    @classmethod
    def from_array(
        cls,
        data,
        grid: WavelengthGrid,
        unit: SpectralUnit,
        interleave: Interleave = Interleave.BIL,
        bit_depth: Optional[int] = None,
    ) -> "HyperCube":
        arr = np.asarray(data, dtype=np.float64)
        return cls(
            rows=arr.shape[0],
            cols=arr.shape[1],
            grid=grid,
            unit=unit,
            data=arr,
            interleave=interleave,
            bit_depth=bit_depth,
        )

    @property
    def bands(self) -> int:
        return len(self.grid)

    def with_data(self, data, unit: Optional[SpectralUnit] = None, bit_depth: Optional[int] = None) -> "HyperCube":
        """New cube with the same geometry."""
        return HyperCube(
            rows=self.rows,
            cols=self.cols,
            grid=self.grid,
            unit=unit or self.unit,
            data=data,
            interleave=self.interleave,
            bit_depth=bit_depth,
        )

    def pixel(self, row: int, col: int) -> Spectrum:
        return Spectrum(grid=self.grid, values=self.data[row, col], unit=self.unit)


class IrradianceSample(ArrayModel):
    """One timestamped downwelling measurement."""

    timestamp_s: float
    spectrum: Spectrum


class IrradianceSeries(ArrayModel):
    """Time-ordered downwelling irradiance log."""

    samples: List[IrradianceSample]

    @model_validator(mode="after")
    def _check_series(self):
        if not self.samples:
            return self
        times = np.array([s.timestamp_s for s in self.samples])
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        grid = self.samples[0].spectrum.grid
        for sample in self.samples:
            if sample.spectrum.unit != SpectralUnit.IRRADIANCE:
                raise ValueError("irradiance log spectra must be irradiance")
            if not sample.spectrum.grid.same_as(grid):
                raise ValueError("all irradiance spectra must share one grid")
        return self

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp_s for s in self.samples], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)


class PhysicalConstants(BaseModel):
    """CODATA constants used by the photon model."""

    model_config = ConfigDict(frozen=True)

    h: float = codata.h
    c: float = codata.c


PHYSICAL_CONSTANTS = PhysicalConstants()

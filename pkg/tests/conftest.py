"""Pytest configuration and fixtures."""
import numpy as np
import pytest
import structlog

from core.config import Settings, apply_settings, settings
from schemas.calibration import CalibrationConfig
from schemas.quality import Roi
from schemas.simulation import IlluminationScenario, Material, SceneSpec
from schemas.spectral import HyperCube, SensorModel, Spectrum, SpectralUnit, WavelengthGrid


@pytest.fixture(autouse=True)
def restore_runtime():
    """CLI runs rewrite the global settings and logging; undo after each test."""
    saved = settings.model_copy()
    yield
    apply_settings(saved)
    structlog.reset_defaults()


@pytest.fixture
def default_settings():
    return Settings()


@pytest.fixture
def grid():
    """61 bands, 400-1000 nm every 10 nm."""
    return WavelengthGrid.linear(400.0, 1000.0, 61)


@pytest.fixture
def sensor_grid():
    """Full 272-band sensor grid."""
    return WavelengthGrid.linear(400.0, 1000.0, 272)


@pytest.fixture
def sensor(sensor_grid):
    return SensorModel.from_settings(Settings(), grid=sensor_grid)


@pytest.fixture
def small_sensor(grid):
    return SensorModel.from_settings(Settings(), grid=grid)


def smooth_qe(wavelengths_nm):
    """Known smooth quantum-efficiency-like curve peaking near 650 nm."""
    wl = np.asarray(wavelengths_nm, dtype=float)
    return 0.55 + 0.45 * np.exp(-(((wl - 650.0) / 220.0) ** 2))


@pytest.fixture
def known_qe():
    """Known responsivity on a fine 1 nm grid covering the sensor range."""
    wl = np.arange(390.0, 1011.0, 1.0)
    return Spectrum.from_arrays(wl, smooth_qe(wl), SpectralUnit.RESPONSIVITY)


def paint_reflectance(wavelengths_nm, low=0.05, high=0.65, edge_nm=600.0):
    """Red-paint-like step in reflectance."""
    wl = np.asarray(wavelengths_nm, dtype=float)
    return low + (high - low) / (1.0 + np.exp(-(wl - edge_nm) / 30.0))


def solar_like(wavelengths_nm, level=1.2):
    """Smooth downwelling irradiance shape peaking in the visible."""
    wl = np.asarray(wavelengths_nm, dtype=float)
    return level * (0.5 + 0.5 * np.exp(-(((wl - 550.0) / 250.0) ** 2)))


@pytest.fixture
def downwelling(grid):
    return Spectrum(grid=grid, values=solar_like(grid.wavelengths_nm), unit=SpectralUnit.IRRADIANCE)


@pytest.fixture
def e_per_dc(grid):
    """Irradiance per count giving a few hundred to ~2000 counts for typical scenes."""
    return Spectrum(grid=grid, values=np.full(len(grid), 5e-4), unit=SpectralUnit.IRRADIANCE)


@pytest.fixture
def calibration(small_sensor, e_per_dc):
    return CalibrationConfig(sensor=small_sensor, e_per_dc=e_per_dc)


@pytest.fixture
def make_cube():
    """Factory for cubes from arrays."""

    def _make(data, grid, unit=SpectralUnit.RADIANCE, bit_depth=None):
        return HyperCube.from_array(np.asarray(data, dtype=float), grid, unit, bit_depth=bit_depth)

    return _make


@pytest.fixture
def two_material_scene(grid):
    """4 x 5 scene: asphalt everywhere, a painted 2 x 3 patch."""
    wl = grid.wavelengths_nm
    asphalt = Material(
        name="asphalt",
        reflectance=Spectrum(grid=grid, values=np.full(len(grid), 0.08), unit=SpectralUnit.REFLECTANCE),
    )
    paint = Material(
        name="red_paint",
        reflectance=Spectrum(grid=grid, values=paint_reflectance(wl), unit=SpectralUnit.REFLECTANCE),
    )
    material_map = np.zeros((4, 5), dtype=int)
    material_map[1:3, 1:4] = 1
    return SceneSpec(rows=4, cols=5, material_map=material_map, materials=[asphalt, paint])


@pytest.fixture
def noon(grid):
    return IlluminationScenario(
        name="noon",
        downwelling=Spectrum(grid=grid, values=solar_like(grid.wavelengths_nm), unit=SpectralUnit.IRRADIANCE),
    )


@pytest.fixture
def hood_roi():
    return Roi.rect("hood", 1, 1, 2, 3)

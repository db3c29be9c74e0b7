"""Desk-scale Lambertian scene simulator and synthetic monochromator sweeps.

Rendering follows L = E * rho * cos(theta) / pi per pixel and band; counts
invert the radiance calibration, DC = round(L * pi / (E/DC)) + dark.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.config import settings
from core.exceptions import DomainError, MissingCalibrationError
from core.logging import get_logger
from core.parallel import map_row_blocks
from schemas.calibration import CalibrationConfig, MonochromatorStep
from schemas.simulation import IlluminationScenario, NoiseModel, RenderedScenario, SceneSpec
from schemas.spectral import (
    PHYSICAL_CONSTANTS,
    HyperCube,
    PhysicalConstants,
    SensorModel,
    Spectrum,
    SpectralUnit,
    WavelengthGrid,
)
from services.spectral import require_same_grid, require_unit, resample

logger = get_logger(__name__)

OXYGEN_A_BAND_NM = 760.0


def simulate_radiance(
    scene: SceneSpec,
    illum: IlluminationScenario,
    workers: Optional[int] = None,
) -> HyperCube:
    """
    Render sensor-reaching radiance of a Lambertian scene.

    Args:
        scene: Material map and palette
        illum: Downwelling irradiance on the material grid

    Returns:
        Radiance cube
    """
    require_same_grid(scene.grid, illum.downwelling.grid, "scene materials and downwelling")
    reflectance = scene.reflectance_cube()
    cos = scene.cos_map()
    e_down = illum.downwelling.values
    stacked = np.concatenate([reflectance, cos[:, :, None]], axis=2)

    def render(block, _first_row):
        rho = block[:, :, :-1]
        return e_down * rho * block[:, :, -1:] / np.pi

    radiance = map_row_blocks(render, stacked, workers)
    return HyperCube.from_array(radiance, scene.grid, SpectralUnit.RADIANCE)


def photon_electrons(
    flux_w,
    t_s,
    lambda_nm,
    eta,
    constants: PhysicalConstants = PHYSICAL_CONSTANTS,
):
    """
    Electrons generated by monochromatic flux: phi * t * lambda / (h c) * eta.

    Args:
        flux_w: Radiant flux in watts
        t_s: Integration time in seconds
        lambda_nm: Wavelength in nanometres
        eta: Quantum efficiency in (0, 1]

    Returns:
        Expected electron count (array if any input is an array)
    """
    flux_w, t_s, lambda_nm, eta = (np.asarray(x, dtype=np.float64) for x in (flux_w, t_s, lambda_nm, eta))
    if np.any(flux_w <= 0) or np.any(t_s <= 0) or np.any(lambda_nm <= 0) or np.any(eta <= 0):
        raise DomainError("photon model inputs must be positive")
    if np.any(eta > 1):
        raise DomainError("quantum efficiency cannot exceed 1")
    electrons = flux_w * t_s * (lambda_nm * 1e-9) / (constants.h * constants.c) * eta
    return float(electrons) if electrons.ndim == 0 else electrons


def photon_snr(flux_w, t_s, lambda_nm, eta) -> float:
    """Shot-noise-limited signal-to-noise ratio, sqrt(S_e)."""
    return np.sqrt(photon_electrons(flux_w, t_s, lambda_nm, eta))


def _pixel_flux(radiance: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Radiance to flux on one detector element (W)."""
    return radiance * sensor.gsd_m ** 2 * sensor.ifov_rad ** 2 * sensor.bandwidths_nm


def _poisson_scale(mean: np.ndarray, rng: np.random.Generator, threshold: float) -> np.ndarray:
    """Ratio of a shot-noise draw to its mean; 1 where the mean is zero."""
    small = mean <= threshold
    counts = rng.poisson(np.where(small, mean, 0.0))
    approx = rng.normal(mean, np.sqrt(mean))
    drawn = np.where(small, counts, np.maximum(approx, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mean > 0, drawn / mean, 1.0)


def radiance_to_dc(
    cube: HyperCube,
    cfg: CalibrationConfig,
    noise: Optional[NoiseModel] = None,
    quantize: bool = True,
    workers: Optional[int] = None,
) -> HyperCube:
    """
    Digital counts that would produce `cube` through the radiance calibration.

    Args:
        cube: Radiance cube on the sensor grid
        cfg: Calibration (irradiance per count, sensor dark frame and bit depth)
        noise: Optional shot-noise model, seeded per pixel by (seed, row, col)
        quantize: Round half-to-even before adding the dark frame

    Returns:
        Cube in digital counts clipped to [0, max_dc]
    """
    require_unit(cube.unit, SpectralUnit.RADIANCE, "cube")
    if cfg.e_per_dc is None:
        raise MissingCalibrationError("irradiance per count is required to render counts")
    sensor = cfg.sensor
    require_same_grid(cube.grid, sensor.grid, "cube and sensor")
    e_per_dc = cfg.e_per_dc.values
    dark = sensor.dark_frame.values
    max_dc = sensor.max_dc
    noise = noise or NoiseModel()

    electrons_per_watt = None
    if noise.enable_poisson:
        require_same_grid(noise.quantum_efficiency.grid, sensor.grid, "quantum efficiency and sensor")
        # S_e per watt of flux; zero-flux samples stay noise-free
        electrons_per_watt = photon_electrons(
            1.0, sensor.exposure_s, sensor.grid.wavelengths_nm, noise.quantum_efficiency.values
        )

    def render(block, first_row):
        signal = block * np.pi / e_per_dc
        if electrons_per_watt is not None:
            mean = _pixel_flux(block, sensor) * electrons_per_watt
            for r in range(block.shape[0]):
                for c in range(block.shape[1]):
                    rng = np.random.default_rng([noise.seed, first_row + r, c])
                    signal[r, c] *= _poisson_scale(mean[r, c], rng, noise.normal_threshold)
        if quantize:
            signal = np.rint(signal)
        return np.clip(signal + dark, 0.0, max_dc)

    counts = map_row_blocks(render, cube.data, workers)
    saturated = int(np.count_nonzero(np.any(counts >= max_dc, axis=2)))
    if saturated:
        logger.warning("Rendered counts clipped at full scale", pixels=saturated, max_dc=max_dc)
    return cube.with_data(counts, unit=SpectralUnit.DIGITAL_COUNT, bit_depth=sensor.bit_depth)


def render_scenarios(
    scene: SceneSpec,
    scenarios: Sequence[IlluminationScenario],
    cfg: Optional[CalibrationConfig] = None,
    noise: Optional[NoiseModel] = None,
    workers: Optional[int] = None,
) -> List[RenderedScenario]:
    """
    Render one radiance cube per scenario, plus counts when `cfg` carries E/DC.

    Output order follows `scenarios`; results are deterministic for a seed.
    """
    rendered = []
    for scenario in scenarios:
        radiance = simulate_radiance(scene, scenario, workers)
        counts = None
        if cfg is not None and cfg.e_per_dc is not None:
            counts = radiance_to_dc(radiance, cfg, noise, workers=workers)
        rendered.append(RenderedScenario(name=scenario.name, radiance=radiance, counts=counts))
        logger.info(
            "Rendered scenario",
            scenario=scenario.name,
            rows=scene.rows,
            cols=scene.cols,
            counts=counts is not None,
        )
    return rendered


def material_mean_spectra(scene: SceneSpec, rendered: Sequence[RenderedScenario]) -> Dict[str, Dict[str, Spectrum]]:
    """Mean radiance of every material under every rendered scenario."""
    means: Dict[str, Dict[str, Spectrum]] = {}
    for result in rendered:
        per_material = {}
        for index, material in enumerate(scene.materials):
            selected = scene.material_map == index
            if not selected.any():
                continue
            per_material[material.name] = Spectrum(
                grid=result.radiance.grid,
                values=result.radiance.data[selected].mean(axis=0),
                unit=SpectralUnit.RADIANCE,
            )
        means[result.name] = per_material
    return means


def builtin_scenarios(
    grid: WavelengthGrid,
    noon_level: float = 1.0,
    cloudy_factor: float = 0.4,
    notch_depth: float = 0.6,
    notch_width_nm: float = 5.0,
) -> List[IlluminationScenario]:
    """
    Qualitative noon, sunset and cloudy downwelling spectra.

    Noon is flat, cloudy is a scaled noon, sunset is reddened with an
    absorption notch centred at 760 nm.
    """
    wl = grid.wavelengths_nm
    noon = np.full(wl.size, noon_level)
    span = max(grid.last - grid.first, 1e-9)
    reddening = 0.3 + 0.5 * (wl - grid.first) / span
    notch = 1.0 - notch_depth * np.exp(-0.5 * ((wl - OXYGEN_A_BAND_NM) / notch_width_nm) ** 2)
    sunset = noon * reddening * notch

    def scenario(name, values):
        return IlluminationScenario(
            name=name,
            downwelling=Spectrum(grid=grid, values=values, unit=SpectralUnit.IRRADIANCE),
        )

    return [
        scenario("noon", noon),
        scenario("sunset", sunset),
        scenario("cloudy", cloudy_factor * noon),
    ]


def simulate_sweep(
    sensor: SensorModel,
    responsivity: Spectrum,
    wavelengths_nm: Sequence[float],
    flux_ref_w: float = 1e-6,
    exposure_ref_s: float = 0.01,
    bandwidth_ref_nm: float = 2.0,
    peak_dc: float = 2000.0,
    sigma_bands: float = 1.5,
    cols: int = 16,
    read_noise_dc: float = 0.0,
    seed: Optional[int] = None,
) -> List[MonochromatorStep]:
    """
    Synthetic monochromator sweep frames from a known responsivity curve.

    Each frame is one line of `cols` identical pixels carrying a Gaussian
    band profile centred on the set wavelength, scaled so the most
    responsive step peaks at `peak_dc`, on top of the sensor dark frame.

    Args:
        sensor: Sensor model (grid, dark frame, bit depth)
        responsivity: Known curve covering every swept wavelength
        wavelengths_nm: Monochromator set points
        read_noise_dc: Standard deviation of additive Gaussian noise
        seed: Noise seed, defaults to the configured seed

    Returns:
        Monochromator steps ready for `build_responsivity`
    """
    seed = settings.seed if seed is None else seed
    step_grid = WavelengthGrid(wavelengths_nm=list(wavelengths_nm))
    response = resample(responsivity, step_grid).values
    amplitudes = peak_dc * response / response.max()
    index = np.arange(sensor.bands, dtype=float)
    rng = np.random.default_rng(seed)

    steps = []
    for lambda_nm, amplitude in zip(step_grid.wavelengths_nm, amplitudes):
        center = sensor.grid.fractional_index(lambda_nm)
        profile = amplitude * np.exp(-((index - center) ** 2) / (2.0 * sigma_bands ** 2))
        frame = np.broadcast_to(profile + sensor.dark_frame.values, (1, cols, sensor.bands)).copy()
        if read_noise_dc > 0:
            frame += rng.normal(0.0, read_noise_dc, frame.shape)
        frame = np.clip(frame, 0.0, sensor.max_dc)
        steps.append(
            MonochromatorStep(
                lambda_nm=float(lambda_nm),
                frame=HyperCube.from_array(frame, sensor.grid, SpectralUnit.DIGITAL_COUNT, bit_depth=sensor.bit_depth),
                flux_ref_w=flux_ref_w,
                exposure_ref_s=exposure_ref_s,
                bandwidth_ref_nm=bandwidth_ref_nm,
            )
        )
    logger.info("Simulated monochromator sweep", steps=len(steps), read_noise_dc=read_noise_dc, seed=seed)
    return steps

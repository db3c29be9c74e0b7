"""Monochromator sweep calibration: band-profile fits, responsivity, E/DC.

The chain is
    counts per watt at each step  (amplitude / reference flux)
    -> resample onto the sensor grid and normalize by the maximum
    -> irradiance per digital count from the reference/field acquisition ratio.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from core.config import settings
from core.exceptions import (
    FitDivergedError,
    InputValidationError,
    InsufficientStepsError,
    NoPeakError,
    SaturatedProfileError,
    ZeroResponsivityError,
)
from core.logging import get_logger
from schemas.calibration import (
    GaussianFit,
    MonochromatorStep,
    ReferenceParameters,
    ResponsivityCurve,
    StepFit,
)
from schemas.spectral import SensorModel, Spectrum, SpectralUnit, WavelengthGrid
from services.spectral import require_same_grid, resample

logger = get_logger(__name__)

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
MAD_TO_SIGMA = 1.4826


def gaussian_profile(index: np.ndarray, amplitude: float, center: float, sigma: float, baseline: float = 0.0):
    """A*exp(-(i-mu)^2/(2 sigma^2)) + baseline."""
    return amplitude * np.exp(-((index - center) ** 2) / (2.0 * sigma ** 2)) + baseline


def extract_band_profile(step: MonochromatorStep, dark: Optional[Spectrum] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Dark-corrected cross-band profile averaged over illuminated pixels.

    A pixel counts as illuminated when its dark-corrected band sum reaches
    half of the brightest pixel's.
    """
    frame = step.frame
    pixels = frame.data.reshape(-1, frame.bands)
    dark_values = np.zeros(frame.bands) if dark is None else dark.values
    corrected = pixels - dark_values
    sums = corrected.sum(axis=1)
    peak_sum = sums.max()
    lit = sums >= 0.5 * peak_sum if peak_sum > 0 else np.ones(sums.shape, dtype=bool)
    return corrected[lit].mean(axis=0), lit


def _initial_guess(profile: np.ndarray, baseline: float):
    index = np.arange(profile.size, dtype=float)
    signal = profile - baseline
    peak = int(np.argmax(signal))
    half = 0.5 * signal[peak]

    left = peak
    while left > 0 and signal[left - 1] >= half:
        left -= 1
    right = peak
    while right < profile.size - 1 and signal[right + 1] >= half:
        right += 1

    # half-max crossings by linear interpolation
    x_left = float(left)
    if left > 0:
        x_left = left - (signal[left] - half) / (signal[left] - signal[left - 1])
    x_right = float(right)
    if right < profile.size - 1:
        x_right = right + (signal[right] - half) / (signal[right] - signal[right + 1])
    sigma = max((x_right - x_left) / FWHM_PER_SIGMA, 0.5)

    window = slice(left, right + 1)
    weights = np.clip(signal[window], 0.0, None)
    center = float(np.sum(index[window] * weights) / np.sum(weights)) if weights.sum() > 0 else float(peak)
    return np.array([profile[peak], center, sigma, baseline])


def fit_band_profile(
    step: MonochromatorStep,
    sensor: Optional[SensorModel] = None,
    max_iterations: Optional[int] = None,
    xtol: Optional[float] = None,
    peak_snr_min: Optional[float] = None,
) -> GaussianFit:
    """
    Fit a Gaussian plus constant baseline to a sweep frame's band profile.

    Args:
        step: Monochromator step with its raw frame
        sensor: Supplies the dark frame and full-scale count; when omitted the
            frame is used as-is and full scale comes from the frame bit depth
        max_iterations: Solver iteration cap
        xtol: Relative parameter-change tolerance
        peak_snr_min: Required peak height in units of the MAD noise floor

    Returns:
        GaussianFit with amplitude, center, sigma, baseline and residual RMS
    """
    max_iterations = max_iterations or settings.fit_max_iterations
    xtol = xtol or settings.fit_xtol
    peak_snr_min = settings.peak_snr_min if peak_snr_min is None else peak_snr_min

    dark = sensor.dark_frame if sensor is not None else None
    if dark is not None:
        require_same_grid(dark.grid, step.frame.grid, "dark frame and sweep frame")
    if sensor is not None:
        max_dc = sensor.max_dc
    else:
        max_dc = 2 ** (step.frame.bit_depth or settings.sensor_bit_depth) - 1

    profile, lit = extract_band_profile(step, dark)
    raw_lit = step.frame.data.reshape(-1, step.frame.bands)[lit]
    if np.any(raw_lit >= max_dc):
        raise SaturatedProfileError(
            f"sweep frame at {step.lambda_nm} nm reaches full scale {max_dc}",
            lambda_nm=step.lambda_nm,
        )

    baseline = float(np.median(profile))
    noise_floor = MAD_TO_SIGMA * float(np.median(np.abs(profile - baseline)))
    peak = float(profile.max()) - baseline
    if peak <= 0 or peak < peak_snr_min * noise_floor:
        raise NoPeakError(
            f"no band peak above {peak_snr_min}x noise floor at {step.lambda_nm} nm",
            lambda_nm=step.lambda_nm,
            peak=peak,
            noise_floor=noise_floor,
        )

    index = np.arange(profile.size, dtype=float)
    x0 = _initial_guess(profile, baseline)

    def residuals(p):
        return gaussian_profile(index, *p) - profile

    def jacobian(p):
        amplitude, center, sigma, _ = p
        g = np.exp(-((index - center) ** 2) / (2.0 * sigma ** 2))
        d = index - center
        return np.column_stack([
            g,
            amplitude * g * d / sigma ** 2,
            amplitude * g * d ** 2 / sigma ** 3,
            np.ones_like(index),
        ])

    result = least_squares(
        residuals,
        x0,
        jac=jacobian,
        method="lm",
        xtol=xtol,
        ftol=xtol,
        gtol=xtol,
        x_scale="jac",
        max_nfev=max_iterations,
    )
    if result.status == 0:
        raise FitDivergedError(
            f"Gaussian fit at {step.lambda_nm} nm did not converge in {max_iterations} iterations",
            lambda_nm=step.lambda_nm,
        )

    amplitude, center, sigma, fitted_baseline = result.x
    sigma = abs(sigma)
    # peaks on the first or last band may land up to half a band outside
    if amplitude <= 0 or not -0.5 <= center <= profile.size - 0.5:
        raise FitDivergedError(
            f"Gaussian fit at {step.lambda_nm} nm left the valid parameter range",
            lambda_nm=step.lambda_nm,
            amplitude=float(amplitude),
            center=float(center),
        )

    fit = GaussianFit(
        amplitude_dc=float(amplitude),
        center_band=float(np.clip(center, 0.0, profile.size - 1)),
        sigma_bands=float(sigma),
        baseline_dc=float(fitted_baseline),
        residual_rms=float(np.sqrt(np.mean(result.fun ** 2))),
        iterations=int(result.nfev),
    )
    logger.debug(
        "Fitted band profile",
        lambda_nm=step.lambda_nm,
        amplitude_dc=fit.amplitude_dc,
        center_band=fit.center_band,
        sigma_bands=fit.sigma_bands,
        residual_rms=fit.residual_rms,
    )
    return fit


def build_responsivity(
    steps: Sequence[MonochromatorStep],
    sensor: SensorModel,
    workers: Optional[int] = None,
) -> ResponsivityCurve:
    """
    Relative spectral responsivity from a monochromator sweep.

    Each step contributes amplitude / reference flux (counts per watt). The
    per-step curve is resampled onto the sensor grid and divided by its
    maximum.

    Args:
        steps: Sweep steps in strictly increasing wavelength order
        sensor: Target sensor model
        workers: Parallel fits; results are merged in wavelength order

    Returns:
        ResponsivityCurve with per-step fits and the normalized curve
    """
    if len(steps) < 2:
        raise InsufficientStepsError(f"at least 2 sweep steps are required, got {len(steps)}")
    wavelengths = np.array([s.lambda_nm for s in steps])
    if np.any(np.diff(wavelengths) <= 0):
        raise InputValidationError("sweep wavelengths must be strictly increasing")

    workers = max(1, workers or settings.workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        fits = list(pool.map(lambda s: fit_band_profile(s, sensor), steps))

    step_fits = [
        StepFit(lambda_nm=s.lambda_nm, flux_ref_w=s.flux_ref_w, fit=f)
        for s, f in zip(steps, fits)
    ]
    per_step = Spectrum(
        grid=WavelengthGrid(wavelengths_nm=wavelengths),
        values=[sf.responsivity for sf in step_fits],
        unit=SpectralUnit.RESPONSIVITY,
    )
    on_sensor = resample(per_step, sensor.grid)
    relative = on_sensor.values / on_sensor.values.max()

    logger.info(
        "Built responsivity curve",
        steps=len(steps),
        peak_nm=float(sensor.grid.wavelengths_nm[int(np.argmax(relative))]),
        worst_residual_rms=max(f.residual_rms for f in fits),
    )
    return ResponsivityCurve(
        fits=step_fits,
        relative=Spectrum(grid=sensor.grid, values=relative, unit=SpectralUnit.RESPONSIVITY),
    )


def reference_from_steps(steps: Sequence[MonochromatorStep], grid: WavelengthGrid) -> ReferenceParameters:
    """Interpolate per-step reference flux, exposure and bandwidth onto `grid`."""
    if len(steps) < 2:
        raise InsufficientStepsError(f"at least 2 sweep steps are required, got {len(steps)}")
    step_grid = WavelengthGrid(wavelengths_nm=[s.lambda_nm for s in steps])

    def on_grid(values) -> np.ndarray:
        spectrum = Spectrum(grid=step_grid, values=values, unit=SpectralUnit.FLUX)
        return resample(spectrum, grid).values

    return ReferenceParameters(
        flux_ref_w=on_grid([s.flux_ref_w for s in steps]),
        exposure_ref_s=on_grid([s.exposure_ref_s for s in steps]),
        bandwidth_ref_nm=on_grid([s.bandwidth_ref_nm for s in steps]),
    )


def irradiance_per_count(
    curve: ResponsivityCurve,
    reference: ReferenceParameters,
    sensor: SensorModel,
    exposure_ratio_inverted: Optional[bool] = None,
) -> Spectrum:
    """
    Irradiance per digital count for every sensor band.

        E/DC = (phi_ref * t_obs/t_ref) * (x_obs^2 * theta_IFOV^2 * B_ref/B_obs * R_norm)^-1

    Args:
        curve: Normalized responsivity on the sensor grid
        reference: Per-band laboratory flux, exposure and bandwidth
        sensor: Field acquisition parameters
        exposure_ratio_inverted: Use t_ref/t_obs instead of t_obs/t_ref

    Returns:
        Spectrum in irradiance units per count
    """
    if exposure_ratio_inverted is None:
        exposure_ratio_inverted = settings.exposure_ratio_inverted
    require_same_grid(curve.relative.grid, sensor.grid, "responsivity and sensor")
    r_norm = curve.relative.values
    if reference.flux_ref_w.size != sensor.bands:
        raise InputValidationError("reference parameters must have one value per sensor band")
    zero = np.flatnonzero(r_norm <= 0)
    if zero.size:
        raise ZeroResponsivityError(
            f"responsivity is zero at {zero.size} band(s) inside the calibrated range",
            first_band=int(zero[0]),
        )

    if exposure_ratio_inverted:
        exposure_ratio = reference.exposure_ref_s / sensor.exposure_s
    else:
        exposure_ratio = sensor.exposure_s / reference.exposure_ref_s

    numerator = reference.flux_ref_w * exposure_ratio
    denominator = (
        sensor.gsd_m ** 2
        * sensor.ifov_rad ** 2
        * (reference.bandwidth_ref_nm / sensor.bandwidths_nm)
        * r_norm
    )
    e_per_dc = numerator / denominator
    logger.info(
        "Computed irradiance per count",
        bands=sensor.bands,
        min=float(e_per_dc.min()),
        max=float(e_per_dc.max()),
        exposure_ratio_inverted=exposure_ratio_inverted,
    )
    return Spectrum(grid=sensor.grid, values=e_per_dc, unit=SpectralUnit.IRRADIANCE)

"""Core configuration management using Pydantic Settings."""
from pathlib import Path
from typing import Optional, Union

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables or a dotenv file."""

    # Sensor model (Nano-Hyperspec class pushbroom defaults)
    sensor_bands: int = Field(default=272, alias="SENSOR_BANDS")
    sensor_wavelength_min_nm: float = Field(default=400.0, alias="SENSOR_WAVELENGTH_MIN_NM")
    sensor_wavelength_max_nm: float = Field(default=1000.0, alias="SENSOR_WAVELENGTH_MAX_NM")
    sensor_bit_depth: int = Field(default=12, alias="SENSOR_BIT_DEPTH")
    sensor_exposure_s: float = Field(default=0.005, alias="SENSOR_EXPOSURE_S")
    sensor_gsd_m: float = Field(default=0.008, alias="SENSOR_GSD_M")
    # 0.008 m GSD seen from 50 ft
    sensor_ifov_rad: float = Field(default=5.249e-4, alias="SENSOR_IFOV_RAD")
    sensor_dark_level_dc: float = Field(default=0.0, alias="SENSOR_DARK_LEVEL_DC")

    # ROI quality thresholds
    sat_frac: float = Field(default=0.98, alias="SAT_FRAC")
    glint_angle_max: float = Field(default=0.10, alias="GLINT_ANGLE_MAX")
    glint_bright_ratio: float = Field(default=3.0, alias="GLINT_BRIGHT_RATIO")
    shadow_ratio: float = Field(default=0.3, alias="SHADOW_RATIO")
    adj_angle_min: float = Field(default=0.05, alias="ADJ_ANGLE_MIN")

    # Radiometric pipeline
    smoothing_width: int = Field(default=5, alias="SMOOTHING_WIDTH")
    clip_max: float = Field(default=1.5, alias="CLIP_MAX")
    clip_reflectance: bool = Field(default=False, alias="CLIP_REFLECTANCE")
    incidence_cos: float = Field(default=1.0, alias="INCIDENCE_COS")
    eq6_as_printed: bool = Field(
        default=False,
        alias="EQ6_AS_PRINTED",
        description="Debug switch: reflectance = L*E/pi instead of pi*L/E",
    )
    exposure_ratio_inverted: bool = Field(default=False, alias="EXPOSURE_RATIO_INVERTED")
    irradiance_window_s: float = Field(default=4.0, alias="IRRADIANCE_WINDOW_S")

    # Gaussian band-profile fitting
    fit_max_iterations: int = Field(default=200, alias="FIT_MAX_ITERATIONS")
    fit_xtol: float = Field(default=1e-10, alias="FIT_XTOL")
    peak_snr_min: float = Field(default=5.0, alias="PEAK_SNR_MIN")

    # Forward simulation
    seed: int = Field(default=0, alias="SEED")
    poisson_normal_threshold: float = Field(default=1000.0, alias="POISSON_NORMAL_THRESHOLD")

    # Runtime
    workers: int = Field(default=1, alias="WORKERS")
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(default="console", alias="LOG_FORMAT")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )


def load_settings(config_path: Optional[Union[str, Path]] = None) -> Settings:
    """
    Load settings, optionally from a dotenv-format config file.

    Args:
        config_path: Path to a `KEY=value` config file; None uses `.env`

    Returns:
        Settings instance
    """
    if config_path is None:
        return Settings()
    return Settings(_env_file=str(config_path))


def apply_settings(new: Settings) -> Settings:
    """Copy `new` into the process-wide settings instance."""
    for name in Settings.model_fields:
        setattr(settings, name, getattr(new, name))
    return settings


# Global settings instance
settings = Settings()

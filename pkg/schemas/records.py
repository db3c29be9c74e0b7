"""Pydantic model for exported material signatures."""
from typing import Dict, Optional

from pydantic import Field, field_validator, model_validator

from schemas.quality import Roi, RoiSummary
from schemas.spectral import ArrayModel, Spectrum, SpectralUnit


class SignatureRecord(ArrayModel):
    """Smoothed mean reflectance of an ROI plus descriptive metadata."""

    reflectance: Spectrum
    roi: Optional[Roi] = None
    timestamp_s: float = 0.0
    metadata: Dict[str, str] = Field(default_factory=dict)
    quality: Optional[RoiSummary] = None

    @field_validator("metadata")
    @classmethod
    def _keys_non_empty(cls, v):
        for key, value in v.items():
            if not key or not key.strip():
                raise ValueError("metadata keys must be non-empty")
            if ":" in key or key.startswith("@") or "\n" in key or "\n" in str(value):
                raise ValueError(f"metadata entry {key!r} cannot be serialized")
        return {key.strip(): str(value).strip() for key, value in v.items()}

    @model_validator(mode="after")
    def _check_unit(self):
        if self.reflectance.unit != SpectralUnit.REFLECTANCE:
            raise ValueError("signature spectra must be reflectance")
        return self

    @property
    def name(self) -> Optional[str]:
        return self.metadata.get("name")


class SpectrumFile(ArrayModel):
    """Two-column spectrum with its `# key: value` header."""

    spectrum: Spectrum
    metadata: Dict[str, str] = Field(default_factory=dict)
    timestamp_s: Optional[float] = None

"""Pydantic model for ENVI-style cube headers."""
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from schemas.spectral import Interleave

# data type code -> numpy type (without byte order)
ENVI_DATA_TYPES = {
    1: "u1",
    2: "i2",
    4: "f4",
    5: "f8",
    12: "u2",
}
INTEGER_DATA_TYPES = {1, 2, 12}


class EnviHeader(BaseModel):
    """Parsed header; keys the toolkit does not interpret are kept in `extra`."""

    model_config = ConfigDict(frozen=True)

    samples: int = Field(..., gt=0)
    lines: int = Field(..., gt=0)
    bands: int = Field(..., gt=0)
    data_type: int
    interleave: Interleave
    byte_order: int = Field(default=0, ge=0, le=1)
    header_offset: int = Field(default=0, ge=0)
    wavelengths_nm: Optional[Tuple[float, ...]] = None
    data_units: Optional[str] = None
    bit_depth: Optional[int] = Field(default=None, ge=1, le=64)
    extra: Dict[str, str] = Field(default_factory=dict)

    @field_validator("extra")
    @classmethod
    def _serializable_extra(cls, v):
        for key, value in v.items():
            if not key or "=" in key or "\n" in key or "\n" in value:
                raise ValueError(f"header entry {key!r} cannot be serialized")
        return v

    @model_validator(mode="after")
    def _check_wavelengths(self):
        if self.wavelengths_nm is not None and len(self.wavelengths_nm) != self.bands:
            raise ValueError(
                f"{len(self.wavelengths_nm)} wavelengths listed for {self.bands} bands"
            )
        return self

    @property
    def numpy_dtype(self) -> str:
        """Byte-order-qualified numpy type string."""
        return (">" if self.byte_order == 1 else "<") + ENVI_DATA_TYPES[self.data_type]

    @property
    def payload_size(self) -> int:
        """Expected data size in bytes, excluding the header offset."""
        itemsize = int(ENVI_DATA_TYPES[self.data_type][1])
        return self.samples * self.lines * self.bands * itemsize

"""Pydantic models for regions of interest and pixel quality screening."""
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import settings
from core.exceptions import OutOfBoundsError
from schemas.spectral import ArrayModel, Spectrum, frozen_array


class RoiShape(str, Enum):
    RECT = "rect"
    POLY = "poly"


class Roi(BaseModel):
    """Inclusive pixel rectangle or polygon in (row, col) coordinates."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    shape: RoiShape
    vertices: Tuple[Tuple[int, int], ...]

    @model_validator(mode="after")
    def _check_vertices(self):
        if self.shape == RoiShape.RECT:
            if len(self.vertices) != 2:
                raise ValueError("rectangle ROI needs two corners")
            (r0, c0), (r1, c1) = self.vertices
            if r1 < r0 or c1 < c0:
                raise ValueError("rectangle corners must be ordered (row0 <= row1, col0 <= col1)")
        elif len(self.vertices) < 3:
            raise ValueError("polygon ROI needs at least three vertices")
        if any(r < 0 or c < 0 for r, c in self.vertices):
            raise ValueError("ROI coordinates must be non-negative")
        return self

    @classmethod
    def rect(cls, name: str, row0: int, col0: int, row1: int, col1: int) -> "Roi":
        return cls(name=name, shape=RoiShape.RECT, vertices=((row0, col0), (row1, col1)))

    @classmethod
    def polygon(cls, name: str, vertices) -> "Roi":
        return cls(name=name, shape=RoiShape.POLY, vertices=tuple((int(r), int(c)) for r, c in vertices))

    def check_bounds(self, rows: int, cols: int):
        for r, c in self.vertices:
            if r >= rows or c >= cols:
                raise OutOfBoundsError(
                    f"ROI '{self.name}' vertex ({r}, {c}) outside {rows}x{cols} cube",
                    roi=self.name,
                )

    def pixel_mask(self, rows: int, cols: int) -> np.ndarray:
        """
        Boolean rows x cols mask of the pixels inside the ROI.

        Polygon membership is tested on pixel centers with the even-odd rule;
        centers on an edge count as inside.
        """
        self.check_bounds(rows, cols)
        mask = np.zeros((rows, cols), dtype=bool)
        if self.shape == RoiShape.RECT:
            (r0, c0), (r1, c1) = self.vertices
            mask[r0:r1 + 1, c0:c1 + 1] = True
            return mask

        rr, cc = np.mgrid[0:rows, 0:cols]
        rr = rr.astype(float)
        cc = cc.astype(float)
        inside = np.zeros((rows, cols), dtype=bool)
        on_edge = np.zeros((rows, cols), dtype=bool)
        verts = np.asarray(self.vertices, dtype=float)
        for (ra, ca), (rb, cb) in zip(verts, np.roll(verts, -1, axis=0)):
            crosses = (ra > rr) != (rb > rr)
            with np.errstate(divide="ignore", invalid="ignore"):
                c_at = ca + (rr - ra) * (cb - ca) / (rb - ra)
            inside ^= crosses & (cc < c_at)
            cross = (rb - ra) * (cc - ca) - (cb - ca) * (rr - ra)
            within = (
                (rr >= min(ra, rb)) & (rr <= max(ra, rb))
                & (cc >= min(ca, cb)) & (cc <= max(ca, cb))
            )
            on_edge |= (cross == 0) & within
        return inside | on_edge

    def pixels(self, rows: int, cols: int) -> np.ndarray:
        """(n, 2) row-major list of member pixel coordinates."""
        return np.argwhere(self.pixel_mask(rows, cols))


class QualityThresholds(BaseModel):
    """Detector thresholds for ROI screening."""

    model_config = ConfigDict(frozen=True)

    sat_frac: float = Field(default=0.98, gt=0, le=1)
    glint_angle_max: float = Field(default=0.10, gt=0)
    glint_bright_ratio: float = Field(default=3.0, gt=0)
    shadow_ratio: float = Field(default=0.3, gt=0)
    adj_angle_min: float = Field(default=0.05, gt=0)

    @classmethod
    def from_settings(cls, config=None) -> "QualityThresholds":
        config = config or settings
        return cls(
            sat_frac=config.sat_frac,
            glint_angle_max=config.glint_angle_max,
            glint_bright_ratio=config.glint_bright_ratio,
            shadow_ratio=config.shadow_ratio,
            adj_angle_min=config.adj_angle_min,
        )


class PixelFlags(BaseModel):
    """Screening outcome for one pixel."""

    model_config = ConfigDict(frozen=True)

    saturated: bool = False
    glint: bool = False
    shadow: bool = False
    adjacency: bool = False

    @model_validator(mode="after")
    def _saturation_implies_glint(self):
        if self.saturated and not self.glint:
            raise ValueError("a saturated pixel must also be flagged as glint")
        return self

    @property
    def clean(self) -> bool:
        return not (self.saturated or self.glint or self.shadow or self.adjacency)


class RoiSummary(BaseModel):
    """Serializable digest of a screening report."""

    model_config = ConfigDict(frozen=True)

    roi_name: str
    total_pixels: int = Field(..., ge=0)
    kept_fraction: float = Field(..., ge=0, le=1)
    flag_counts: Dict[str, int] = Field(default_factory=dict)
    notes: Tuple[str, ...] = ()


class RoiReport(ArrayModel):
    """Per-pixel flags for an ROI together with its median spectrum."""

    roi: Roi
    pixels: np.ndarray
    flags: List[PixelFlags]
    kept_fraction: float = Field(..., ge=0, le=1)
    median_spectrum: Spectrum
    notes: List[str] = Field(default_factory=list)

    @field_validator("pixels", mode="before")
    @classmethod
    def _validate_pixels(cls, v):
        arr = frozen_array(v, dtype=np.int64)
        return arr.reshape(-1, 2)

    @model_validator(mode="after")
    def _check_fraction(self):
        if len(self.flags) != self.pixels.shape[0]:
            raise ValueError("one flag set per ROI pixel is required")
        total = len(self.flags)
        kept = sum(1 for f in self.flags if f.clean)
        if total and not np.isclose(self.kept_fraction, kept / total, rtol=0, atol=1e-15):
            raise ValueError("kept_fraction must equal kept pixels / total pixels")
        return self

    def keep_mask(self, rows: int, cols: int) -> np.ndarray:
        """rows x cols mask, True for clean ROI pixels only."""
        mask = np.zeros((rows, cols), dtype=bool)
        for (r, c), f in zip(self.pixels, self.flags):
            mask[r, c] = f.clean
        return mask

    def flag_counts(self) -> Dict[str, int]:
        return {
            "saturated": sum(f.saturated for f in self.flags),
            "glint": sum(f.glint for f in self.flags),
            "shadow": sum(f.shadow for f in self.flags),
            "adjacency": sum(f.adjacency for f in self.flags),
        }

    def summary(self) -> RoiSummary:
        return RoiSummary(
            roi_name=self.roi.name,
            total_pixels=len(self.flags),
            kept_fraction=self.kept_fraction,
            flag_counts=self.flag_counts(),
            notes=tuple(self.notes),
        )

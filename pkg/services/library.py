"""Signature comparison and library matching.

Spectra on different grids are compared over the overlap of their ranges,
on the first spectrum's band centers that fall inside it.
"""
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.exceptions import TargetOutOfRangeError
from core.logging import get_logger
from schemas.records import SignatureRecord
from schemas.spectral import Spectrum, WavelengthGrid
from services.spectral import require_unit, resample, rmse, spectral_angle

logger = get_logger(__name__)


def align_spectra(a: Spectrum, b: Spectrum) -> Tuple[Spectrum, Spectrum]:
    """
    Bring two spectra onto one grid.

    Identical grids pass through. Otherwise both are resampled onto the
    bands of `a` (or of `b` when `a` has fewer than two) that lie inside
    the shared wavelength range.

    Raises:
        TargetOutOfRangeError: If the ranges overlap in fewer than two bands
    """
    if a.grid.same_as(b.grid):
        return a, b
    lo = max(a.grid.first, b.grid.first)
    hi = min(a.grid.last, b.grid.last)
    if lo > hi:
        raise TargetOutOfRangeError(
            f"spectral ranges [{a.grid.first}, {a.grid.last}] and "
            f"[{b.grid.first}, {b.grid.last}] nm do not overlap"
        )

    common = None
    for candidate in (a.grid, b.grid):
        wl = candidate.wavelengths_nm
        inside = wl[(wl >= lo) & (wl <= hi)]
        if inside.size >= 2:
            common = WavelengthGrid(wavelengths_nm=inside)
            break
    if common is None:
        raise TargetOutOfRangeError(f"overlap [{lo}, {hi}] nm holds fewer than two bands")

    logger.warning(
        "Resampled spectra to their common range",
        first_nm=common.first,
        last_nm=common.last,
        bands=len(common),
    )
    return resample(a, common), resample(b, common)


def compare_spectra(a: Spectrum, b: Spectrum) -> Tuple[dict, pd.DataFrame]:
    """
    Spectral angle, RMSE and a per-band difference table.

    Returns:
        (metrics, table) where table has wavelength_nm, a, b, difference
        and ratio columns for plotting
    """
    require_unit(b.unit, a.unit, "second spectrum")
    a, b = align_spectra(a, b)
    metrics = {
        "spectral_angle_rad": spectral_angle(a, b),
        "rmse": rmse(a, b),
        "bands": len(a.grid),
        "first_nm": a.grid.first,
        "last_nm": a.grid.last,
    }
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b.values != 0, a.values / b.values, np.nan)
    table = pd.DataFrame(
        {
            "wavelength_nm": a.wavelengths_nm,
            "a": a.values,
            "b": b.values,
            "difference": a.values - b.values,
            "ratio": ratio,
        }
    )
    return metrics, table


class SignatureLibrary:
    """In-memory collection of signature records ranked by spectral angle."""

    def __init__(self, records: Sequence[SignatureRecord]):
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def rank(self, query: Spectrum, top: Optional[int] = None) -> pd.DataFrame:
        """
        Rank library entries against `query`.

        Sorted by spectral angle with RMSE breaking ties; entries whose range
        does not overlap the query are skipped with a warning.

        Args:
            query: Reflectance spectrum to identify
            top: Keep only the best `top` rows

        Returns:
            DataFrame with rank, name, spectral_angle_rad, rmse and bands
        """
        rows = []
        for record in self.records:
            try:
                metrics, _ = compare_spectra(query, record.reflectance)
            except TargetOutOfRangeError as exc:
                logger.warning("Skipped library entry", name=record.name, reason=exc.message)
                continue
            rows.append(
                {
                    "name": record.name,
                    "spectral_angle_rad": metrics["spectral_angle_rad"],
                    "rmse": metrics["rmse"],
                    "bands": metrics["bands"],
                }
            )

        columns = ["rank", "name", "spectral_angle_rad", "rmse", "bands"]
        if not rows:
            return pd.DataFrame(columns=columns)
        table = pd.DataFrame(rows).sort_values(
            ["spectral_angle_rad", "rmse", "name"], kind="mergesort"
        ).reset_index(drop=True)
        table.insert(0, "rank", np.arange(1, len(table) + 1))
        if top is not None:
            table = table.head(top)
        logger.info("Ranked library", entries=len(self.records), matched=len(rows), best=table["name"].iloc[0])
        return table[columns]

"""Small text inputs: sweep manifests, ROI lists, scene files, metadata and masks."""
import io
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.exceptions import MissingKeyError, ParseError, PathValidationError
from core.logging import get_logger
from ingestion.envi import load_cube
from ingestion.spectra import read_spectrum_file, split_text
from schemas.calibration import MonochromatorStep
from schemas.quality import Roi, RoiShape
from schemas.simulation import Material, SceneSpec
from schemas.spectral import SpectralUnit, WavelengthGrid

logger = get_logger(__name__)

PathLike = Union[str, Path]

SWEEP_COLUMNS = ["lambda_nm", "frame", "flux_ref_w", "exposure_ref_s", "bandwidth_ref_nm"]


def _read_text(path: Path) -> str:
    if not path.is_file():
        raise PathValidationError(f"file not found: {path}", path=str(path))
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"file is not valid UTF-8 at byte {exc.start}", source=str(path))


def _resolve(base: Path, entry: str) -> Path:
    path = Path(entry)
    return path if path.is_absolute() else base / path


# Sweep manifest: `lambda_nm, frame_path, flux_ref_w, exposure_ref_s, bandwidth_ref_nm` per line

def _data_lines(text: str) -> Tuple[List[int], str]:
    """Line numbers and comment-stripped text of the non-empty lines."""
    numbers, bodies = [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            numbers.append(line_no)
            bodies.append(body)
    return numbers, "\n".join(bodies)


def read_sweep_manifest(path: PathLike) -> pd.DataFrame:
    """
    Load and validate a sweep manifest.

    One step per line, comma separated, `#` comments allowed. A first line
    naming the columns is accepted and then fixes the column order. Frame
    paths are relative to the manifest. Every frame path is checked before
    anything is fitted.

    Returns:
        DataFrame with a resolved `frame_path` column
    """
    path = Path(path)
    source = str(path)
    text = _read_text(path)
    line_numbers, body = _data_lines(text)
    try:
        df = pd.read_csv(io.StringIO(body), header=None, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"unreadable sweep manifest: {exc}", source=source)
    df = df.map(lambda value: value.strip() if isinstance(value, str) else value)

    first = [str(v).strip() for v in df.iloc[0]]
    if first[0] == SWEEP_COLUMNS[0]:
        df = df.iloc[1:].reset_index(drop=True)
        df.columns = first
        line_numbers = line_numbers[1:]
        for column in SWEEP_COLUMNS:
            if column not in df.columns:
                raise MissingKeyError(column, source=source)
    elif df.shape[1] != len(SWEEP_COLUMNS):
        raise ParseError(
            f"expected {len(SWEEP_COLUMNS)} fields ({', '.join(SWEEP_COLUMNS)}), found {df.shape[1]}",
            line=line_numbers[0],
            source=source,
        )
    else:
        df.columns = SWEEP_COLUMNS

    frames = df["frame"]
    if frames.isna().any():
        row = int(np.flatnonzero(frames.isna().to_numpy())[0])
        raise ParseError("missing frame path", line=line_numbers[row], source=source)

    numeric = [c for c in SWEEP_COLUMNS if c != "frame"]
    for column in numeric:
        converted = pd.to_numeric(df[column], errors="coerce")
        bad = converted.isna() | ~np.isfinite(converted.fillna(0)) | (converted <= 0)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(
                f"'{column}' must be a positive number, got {df[column].iloc[row]!r}",
                line=line_numbers[row],
                source=source,
            )
        df[column] = converted.astype(float)

    df["frame"] = [str(entry).strip() for entry in frames]
    df["frame_path"] = [_resolve(path.parent, entry) for entry in df["frame"]]
    missing = [str(p) for p in df["frame_path"] if not p.is_file()]
    if missing:
        raise PathValidationError(
            f"{len(missing)} sweep frame(s) not found, first: {missing[0]}",
            path=missing[0],
            missing=len(missing),
        )
    logger.info("Validated sweep manifest", path=source, steps=len(df))
    return df


def load_sweep(path: PathLike, grid: Optional[WavelengthGrid] = None) -> List[MonochromatorStep]:
    """Monochromator steps in manifest order, frames loaded from disk."""
    manifest = read_sweep_manifest(path)
    steps = []
    for row in manifest.itertuples(index=False):
        steps.append(
            MonochromatorStep(
                lambda_nm=row.lambda_nm,
                frame=load_cube(row.frame_path, grid),
                flux_ref_w=row.flux_ref_w,
                exposure_ref_s=row.exposure_ref_s,
                bandwidth_ref_nm=row.bandwidth_ref_nm,
                source=row.frame_path,
            )
        )
    return steps


def write_sweep_manifest(path: PathLike, rows: List[Dict[str, object]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("# " + ", ".join(SWEEP_COLUMNS) + "\n")
        pd.DataFrame(rows, columns=SWEEP_COLUMNS).to_csv(fh, index=False, header=False)
    return path


# ROI file: `name, row0, col0, row1, col1` (inclusive) or `name, poly, r1,c1, r2,c2, ...`

def roi_tokens(text: str) -> List[str]:
    return text.replace(",", " ").split()


def parse_roi_line(tokens: List[str], line: Optional[int] = None, source: Optional[str] = None) -> Roi:
    if len(tokens) < 2:
        raise ParseError("expected 'name, row0, col0, row1, col1' or 'name, poly, r,c, ...'", line=line, source=source)
    name, rest = tokens[0], tokens[1:]
    shape = RoiShape.RECT
    if rest[0].lower() == RoiShape.POLY.value:
        shape, rest = RoiShape.POLY, rest[1:]
    try:
        coords = [int(t) for t in rest]
    except ValueError:
        raise ParseError("ROI coordinates must be integers", line=line, source=source)
    if shape == RoiShape.RECT and len(coords) != 4:
        raise ParseError("rectangle ROI takes row0, col0, row1, col1", line=line, source=source)
    if len(coords) % 2:
        raise ParseError("ROI coordinates come in (row, col) pairs", line=line, source=source)
    vertices = tuple(zip(coords[0::2], coords[1::2]))
    try:
        return Roi(name=name, shape=shape, vertices=vertices)
    except ValueError as exc:
        # pydantic ValidationError is a ValueError
        message = exc.errors()[0]["msg"] if isinstance(exc, ValidationError) else str(exc)
        raise ParseError(f"invalid ROI '{name}': {message}", line=line, source=source)


def format_roi_line(roi: Roi) -> str:
    if roi.shape == RoiShape.RECT:
        (r0, c0), (r1, c1) = roi.vertices
        return f"{roi.name}, {r0}, {c0}, {r1}, {c1}"
    coords = ", ".join(f"{r},{c}" for r, c in roi.vertices)
    return f"{roi.name}, poly, {coords}"


def read_roi_file(path: PathLike) -> List[Roi]:
    """ROIs in file order; names must be unique."""
    path = Path(path)
    source = str(path)
    _, rows = split_text(_read_text(path), source)
    rois: List[Roi] = []
    seen = set()
    for tokens, line_no in rows:
        roi = parse_roi_line(tokens, line_no, source)
        if roi.name in seen:
            raise ParseError(f"duplicate ROI name '{roi.name}'", line=line_no, source=source)
        seen.add(roi.name)
        rois.append(roi)
    if not rois:
        raise ParseError("ROI file lists no regions", source=source)
    return rois


def write_roi_file(path: PathLike, rois: List[Roi]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(format_roi_line(r) + "\n" for r in rois), encoding="utf-8")
    return path


# Scene file

def read_scene_file(path: PathLike) -> SceneSpec:
    """
    Parse a scene description.

    Layout: a `rows cols` line, palette lines `index name spectrum_path`
    (paths relative to the scene file), then `rows` lines of `cols`
    material indices. `#` lines are comments.
    """
    path = Path(path)
    source = str(path)
    _, lines = split_text(_read_text(path), source)
    if not lines:
        raise ParseError("scene file is empty", source=source)

    head, head_line = lines[0]
    if len(head) != 2:
        raise ParseError("first line must be 'rows cols'", line=head_line, source=source)
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("rows and cols must be integers", line=head_line, source=source)
    if rows <= 0 or cols <= 0:
        raise ParseError("rows and cols must be positive", line=head_line, source=source)
    if len(lines) < 1 + rows:
        raise ParseError(f"expected {rows} grid lines after the palette", source=source)

    palette_lines = lines[1:len(lines) - rows]
    grid_lines = lines[len(lines) - rows:]

    palette: Dict[int, Tuple[str, Path, int]] = {}
    for tokens, line_no in palette_lines:
        if len(tokens) != 3:
            raise ParseError("palette lines are 'index name spectrum_path'", line=line_no, source=source)
        try:
            index = int(tokens[0])
        except ValueError:
            raise ParseError("palette index must be an integer", line=line_no, source=source)
        if index in palette:
            raise ParseError(f"palette index {index} repeated", line=line_no, source=source)
        palette[index] = (tokens[1], _resolve(path.parent, tokens[2]), line_no)
    if sorted(palette) != list(range(len(palette))) or not palette:
        raise ParseError("palette indices must run 0..n-1", source=source)

    material_map = np.zeros((rows, cols), dtype=np.int64)
    for r, (tokens, line_no) in enumerate(grid_lines):
        if len(tokens) != cols:
            raise ParseError(f"expected {cols} indices, found {len(tokens)}", line=line_no, source=source)
        try:
            material_map[r] = [int(t) for t in tokens]
        except ValueError:
            raise ParseError("material indices must be integers", line=line_no, source=source)
        unknown = set(material_map[r].tolist()) - set(palette)
        if unknown:
            raise ParseError(f"unknown material index {min(unknown)}", line=line_no, source=source)

    materials = []
    for index in range(len(palette)):
        name, spectrum_path, line_no = palette[index]
        if not spectrum_path.is_file():
            raise PathValidationError(f"material spectrum not found: {spectrum_path}", path=str(spectrum_path))
        reflectance = read_spectrum_file(spectrum_path, default_unit=SpectralUnit.REFLECTANCE).spectrum
        try:
            materials.append(Material(name=name, reflectance=reflectance))
        except ValidationError as exc:
            raise ParseError(f"material '{name}': {exc.errors()[0]['msg']}", line=line_no, source=source)

    try:
        scene = SceneSpec(rows=rows, cols=cols, material_map=material_map, materials=materials)
    except ValidationError as exc:
        raise ParseError(f"invalid scene: {exc.errors()[0]['msg']}", source=source)
    logger.info("Loaded scene", path=source, rows=rows, cols=cols, materials=len(materials))
    return scene


# Metadata file: `key: value`, or `roi/key: value` for one ROI

def read_metadata_file(path: PathLike) -> Dict[str, Dict[str, str]]:
    """
    Signature metadata keyed by ROI name; the "" entry applies to every ROI.
    """
    path = Path(path)
    source = str(path)
    metadata: Dict[str, Dict[str, str]] = {"": {}}
    for line_no, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError("expected 'key: value'", line=line_no, source=source)
        key, value = (part.strip() for part in line.split(":", 1))
        roi, _, key = key.rpartition("/")
        if not key:
            raise ParseError("empty metadata key", line=line_no, source=source)
        metadata.setdefault(roi, {})[key] = value
    return metadata


def metadata_for(metadata: Dict[str, Dict[str, str]], roi_name: str) -> Dict[str, str]:
    return {**metadata.get("", {}), **metadata.get(roi_name, {})}


# Mask file: rows x cols grid of 0/1

def write_mask(path: PathLike, mask: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(mask, dtype=np.int64), fmt="%d")
    return path


def read_mask(path: PathLike, rows: int, cols: int) -> np.ndarray:
    """Boolean keep-mask; must match the cube extent."""
    path = Path(path)
    source = str(path)
    _, lines = split_text(_read_text(path), source)
    if len(lines) != rows:
        raise ParseError(f"mask has {len(lines)} rows, cube has {rows}", source=source)
    mask = np.zeros((rows, cols), dtype=bool)
    for r, (tokens, line_no) in enumerate(lines):
        if len(tokens) != cols or any(t not in ("0", "1") for t in tokens):
            raise ParseError(f"mask rows are {cols} values of 0 or 1", line=line_no, source=source)
        mask[r] = [t == "1" for t in tokens]
    return mask

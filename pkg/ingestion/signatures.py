"""Signature record files and library directories.

A record is a spectrum file in reflectance whose header carries reserved
`@`-prefixed entries (format tag, timestamp, ROI, quality digest) followed
by free metadata. `name` is mandatory.
"""
import re
from pathlib import Path
from typing import Iterable, List, Optional, Union

from pydantic import ValidationError

from core.exceptions import InputValidationError, MissingMetadataKeyError, ParseError, PathValidationError
from core.logging import get_logger
from ingestion.manifests import format_roi_line, parse_roi_line, roi_tokens
from ingestion.spectra import (
    build_spectrum,
    format_float,
    parse_columns,
    parse_float,
    parse_unit,
    split_text,
)
from schemas.quality import RoiSummary
from schemas.records import SignatureRecord

logger = get_logger(__name__)

FORMAT_TAG = "hyperspec-signature/1"
SIGNATURE_SUFFIX = ".sig"

PathLike = Union[str, Path]


def format_signature_record(record: SignatureRecord) -> str:
    if not record.name:
        raise MissingMetadataKeyError("signature metadata needs a 'name'")
    lines = [
        f"# @format: {FORMAT_TAG}",
        f"# @unit: {record.reflectance.unit.value}",
        f"# @timestamp_s: {format_float(record.timestamp_s)}",
    ]
    if record.roi is not None:
        if len(roi_tokens(record.roi.name)) != 1:
            raise InputValidationError(f"ROI name {record.roi.name!r} cannot contain whitespace or commas")
        lines.append(f"# @roi: {format_roi_line(record.roi)}")
    if record.quality is not None:
        lines.append(f"# @quality: {record.quality.model_dump_json()}")
    lines.extend(f"# {key}: {value}" for key, value in record.metadata.items())
    lines.extend(
        f"{format_float(w)} {format_float(v)}"
        for w, v in zip(record.reflectance.wavelengths_nm, record.reflectance.values)
    )
    return "\n".join(lines) + "\n"


def parse_signature_record(text: Union[str, bytes], source: Optional[str] = None) -> SignatureRecord:
    """
    Parse a signature record.

    Raises:
        MissingMetadataKeyError: If the `name` entry is absent
        ParseError: On malformed content
    """
    header, rows = split_text(text, source)
    reserved = {}
    metadata = {}
    for key, value, line_no in header:
        if key.startswith("@"):
            reserved[key[1:]] = (value, line_no)
        else:
            metadata[key] = value

    if "format" in reserved and reserved["format"][0] != FORMAT_TAG:
        raise ParseError(f"unsupported record format {reserved['format'][0]!r}", line=reserved["format"][1], source=source)
    if "name" not in metadata:
        raise MissingMetadataKeyError("signature record lacks a 'name' entry", source=source)

    unit_value, unit_line = reserved.get("unit", ("Reflectance_unitless", None))
    unit = parse_unit(unit_value, unit_line, source)
    timestamp = 0.0
    if "timestamp_s" in reserved:
        timestamp = parse_float(*reserved["timestamp_s"], source=source, what="timestamp")
    roi = None
    if "roi" in reserved:
        value, line_no = reserved["roi"]
        roi = parse_roi_line(roi_tokens(value), line_no, source)
    quality = None
    if "quality" in reserved:
        value, line_no = reserved["quality"]
        try:
            quality = RoiSummary.model_validate_json(value)
        except ValidationError as exc:
            raise ParseError(f"quality digest rejected: {exc.errors()[0]['msg']}", line=line_no, source=source)

    wavelengths, values = parse_columns(rows, source)
    reflectance = build_spectrum(wavelengths, values, unit, source)
    try:
        return SignatureRecord(
            reflectance=reflectance,
            roi=roi,
            timestamp_s=timestamp,
            metadata=metadata,
            quality=quality,
        )
    except ValidationError as exc:
        raise ParseError(f"signature record rejected: {exc.errors()[0]['msg']}", source=source)


def write_signature_record(path: PathLike, record: SignatureRecord) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_signature_record(record), encoding="utf-8")
    return path


def read_signature_record(path: PathLike) -> SignatureRecord:
    path = Path(path)
    if not path.is_file():
        raise PathValidationError(f"file not found: {path}", path=str(path))
    return parse_signature_record(path.read_bytes(), source=str(path))


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "signature"


def export_library(records: Iterable[SignatureRecord], directory: PathLike) -> List[Path]:
    """
    Write records as `NNN_<slug>.sig`, numbered from 001 in input order.

    Returns:
        Written paths in order
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for number, record in enumerate(records, start=1):
        if not record.name:
            raise MissingMetadataKeyError("signature metadata needs a 'name'")
        path = directory / f"{number:03d}_{slugify(record.name)}{SIGNATURE_SUFFIX}"
        write_signature_record(path, record)
        paths.append(path)
    logger.info("Exported signature library", directory=str(directory), records=len(paths))
    return paths


def load_library(directory: PathLike) -> List[SignatureRecord]:
    """Every `.sig` record in a directory, in file-name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise PathValidationError(f"library directory not found: {directory}", path=str(directory))
    records = [read_signature_record(p) for p in sorted(directory.glob(f"*{SIGNATURE_SUFFIX}"))]
    logger.info("Loaded signature library", directory=str(directory), records=len(records))
    return records

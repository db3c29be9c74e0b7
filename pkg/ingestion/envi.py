"""ENVI-style header parsing and raw cube I/O.

Cubes are held band-last in memory; on disk they follow the header's
interleave and byte order.
"""
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.config import settings
from core.exceptions import (
    BadMagicError,
    InputValidationError,
    MalformedListError,
    MissingKeyError,
    NonMonotoneWavelengthError,
    ParseError,
    PathValidationError,
    SizeMismatchError,
    UnsupportedDataTypeError,
)
from core.logging import get_logger
from schemas.envi import ENVI_DATA_TYPES, INTEGER_DATA_TYPES, EnviHeader
from schemas.spectral import HyperCube, Interleave, SpectralUnit, WavelengthGrid

logger = get_logger(__name__)

REQUIRED_KEYS = ("samples", "lines", "bands", "interleave", "data type")
KNOWN_KEYS = REQUIRED_KEYS + ("byte order", "header offset", "wavelength", "data units", "bit depth")
DATA_SUFFIXES = (".img", ".raw", ".dat", ".bil", ".bsq", ".bip", "")

# on-disk axis order per interleave, and the transpose back to (lines, samples, bands)
_DISK_SHAPE = {
    Interleave.BSQ: lambda h: (h.bands, h.lines, h.samples),
    Interleave.BIL: lambda h: (h.lines, h.bands, h.samples),
    Interleave.BIP: lambda h: (h.lines, h.samples, h.bands),
}
_TO_MEMORY = {Interleave.BSQ: (1, 2, 0), Interleave.BIL: (0, 2, 1), Interleave.BIP: (0, 1, 2)}
_TO_DISK = {Interleave.BSQ: (2, 0, 1), Interleave.BIL: (0, 2, 1), Interleave.BIP: (0, 1, 2)}


def _decode(text: Union[str, bytes], source: Optional[str]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"header is not valid UTF-8 at byte {exc.start}", source=source)


def _split_entries(text: str, source: Optional[str]) -> Dict[str, Tuple[str, int]]:
    """key -> (raw value, line number); brace values may span lines."""
    lines = text.splitlines()
    first = next((i for i, line in enumerate(lines) if line.strip()), None)
    if first is None or lines[first].strip() != "ENVI":
        raise BadMagicError("header must start with 'ENVI'", line=1 if first is None else first + 1, source=source)

    entries: Dict[str, Tuple[str, int]] = {}
    i = first + 1
    while i < len(lines):
        line_no = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith(";"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line[:40]!r}", line=line_no, source=source)
        key, value = line.split("=", 1)
        key = " ".join(key.split()).lower()
        value = value.strip()
        if not key:
            raise ParseError("empty header key", line=line_no, source=source)
        if value.startswith("{"):
            parts = [value]
            while "}" not in parts[-1]:
                if i >= len(lines):
                    raise MalformedListError(f"unterminated list for '{key}'", line=line_no, source=source)
                parts.append(lines[i].strip())
                i += 1
            value = " ".join(parts)
            if not value.endswith("}") or value.count("{") != 1 or value.count("}") != 1:
                raise MalformedListError(f"malformed list for '{key}'", line=line_no, source=source)
        if key in entries:
            raise ParseError(f"duplicate header key '{key}'", line=line_no, source=source)
        entries[key] = (value, line_no)
    return entries


def _parse_int(entries, key: str, source: Optional[str], default: Optional[int] = None) -> Optional[int]:
    if key not in entries:
        return default
    value, line_no = entries[key]
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"'{key}' must be an integer, got {value!r}", line=line_no, source=source)


def _parse_float_list(value: str, key: str, line_no: int, source: Optional[str]) -> Tuple[float, ...]:
    if not (value.startswith("{") and value.endswith("}")):
        raise MalformedListError(f"'{key}' must be a {{...}} list", line=line_no, source=source)
    body = value[1:-1].strip()
    if not body:
        return ()
    try:
        return tuple(float(item) for item in body.split(","))
    except ValueError:
        raise MalformedListError(f"'{key}' holds a non-numeric entry", line=line_no, source=source)


def parse_envi_header(text: Union[str, bytes], source: Optional[str] = None) -> EnviHeader:
    """
    Parse an ENVI header.

    Args:
        text: Header content, `key = value` lines after an `ENVI` magic line
        source: File name used in error locations

    Returns:
        EnviHeader; unrecognized keys kept verbatim in `extra`

    Raises:
        BadMagicError, MissingKeyError, MalformedListError, ParseError
    """
    entries = _split_entries(_decode(text, source), source)
    for key in REQUIRED_KEYS:
        if key not in entries:
            raise MissingKeyError(key, source=source)

    interleave_raw, interleave_line = entries["interleave"]
    try:
        interleave = Interleave(interleave_raw.lower())
    except ValueError:
        raise ParseError(f"unknown interleave {interleave_raw!r}", line=interleave_line, source=source)

    wavelengths = None
    if "wavelength" in entries:
        value, line_no = entries["wavelength"]
        wavelengths = _parse_float_list(value, "wavelength", line_no, source)
        if not all(np.isfinite(w) and w > 0 for w in wavelengths):
            raise MalformedListError("wavelengths must be finite and positive", line=line_no, source=source)
        if any(b <= a for a, b in zip(wavelengths, wavelengths[1:])):
            raise NonMonotoneWavelengthError("header wavelengths must increase", line=line_no, source=source)

    fields = dict(
        samples=_parse_int(entries, "samples", source),
        lines=_parse_int(entries, "lines", source),
        bands=_parse_int(entries, "bands", source),
        data_type=_parse_int(entries, "data type", source),
        interleave=interleave,
        byte_order=_parse_int(entries, "byte order", source, 0),
        header_offset=_parse_int(entries, "header offset", source, 0),
        wavelengths_nm=wavelengths,
        data_units=entries["data units"][0] if "data units" in entries else None,
        bit_depth=_parse_int(entries, "bit depth", source),
        extra={k: v for k, (v, _) in entries.items() if k not in KNOWN_KEYS},
    )
    try:
        return EnviHeader(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ParseError(f"invalid header: {first['msg']}", source=source)


def serialize_header(header: EnviHeader) -> str:
    """Header text; floats are written in shortest round-trip form."""
    lines = [
        "ENVI",
        f"samples = {header.samples}",
        f"lines = {header.lines}",
        f"bands = {header.bands}",
        f"header offset = {header.header_offset}",
        f"data type = {header.data_type}",
        f"interleave = {header.interleave.value}",
        f"byte order = {header.byte_order}",
    ]
    if header.wavelengths_nm is not None:
        lines.append("wavelength = {" + ", ".join(repr(float(w)) for w in header.wavelengths_nm) + "}")
    if header.data_units is not None:
        lines.append(f"data units = {header.data_units}")
    if header.bit_depth is not None:
        lines.append(f"bit depth = {header.bit_depth}")
    lines.extend(f"{key} = {value}" for key, value in header.extra.items())
    return "\n".join(lines) + "\n"


def read_cube(header: EnviHeader, payload: bytes, grid: Optional[WavelengthGrid] = None) -> HyperCube:
    """
    Decode a raw payload into a cube.

    Args:
        header: Parsed header
        payload: Raw bytes, including `header offset` leading bytes
        grid: Band centers to use when the header lists none

    Returns:
        HyperCube in the header's unit (digital counts when absent). Counts
        without a `bit depth` key are checked against `SENSOR_BIT_DEPTH`.
    """
    if header.data_type not in ENVI_DATA_TYPES:
        raise UnsupportedDataTypeError(f"data type {header.data_type} is not supported")
    data = payload[header.header_offset:]
    if len(payload) < header.header_offset or len(data) != header.payload_size:
        raise SizeMismatchError(
            f"payload holds {max(len(data), 0)} bytes, header describes {header.payload_size}",
            expected=header.payload_size,
            actual=len(data),
        )

    if header.wavelengths_nm is not None:
        grid = WavelengthGrid(wavelengths_nm=header.wavelengths_nm)
    elif grid is None:
        raise MissingKeyError("wavelength")
    elif len(grid) != header.bands:
        raise SizeMismatchError(f"grid has {len(grid)} bands, header describes {header.bands}")

    unit = SpectralUnit.DIGITAL_COUNT
    if header.data_units is not None:
        try:
            unit = SpectralUnit(header.data_units)
        except ValueError:
            raise ParseError(f"unknown data units {header.data_units!r}")

    bit_depth = None
    if unit == SpectralUnit.DIGITAL_COUNT:
        # counts without a declared depth are taken at the sensor depth
        bit_depth = header.bit_depth if header.bit_depth is not None else settings.sensor_bit_depth

    raw = np.frombuffer(data, dtype=header.numpy_dtype).reshape(_DISK_SHAPE[header.interleave](header))
    cube_data = np.transpose(raw, _TO_MEMORY[header.interleave]).astype(np.float64)
    try:
        return HyperCube(
            rows=header.lines,
            cols=header.samples,
            grid=grid,
            unit=unit,
            data=cube_data,
            interleave=header.interleave,
            bit_depth=bit_depth,
        )
    except ValidationError as exc:
        raise ParseError(f"cube content rejected: {exc.errors()[0]['msg']}")


def _default_data_type(cube: HyperCube) -> int:
    data = cube.data
    if (
        cube.unit == SpectralUnit.DIGITAL_COUNT
        and np.all(data == np.round(data))
        and data.min() >= 0
        and data.max() <= np.iinfo(np.uint16).max
    ):
        return 12
    return 5


def write_cube(
    cube: HyperCube,
    data_type: Optional[int] = None,
    interleave: Optional[Interleave] = None,
    byte_order: int = 0,
    extra: Optional[Dict[str, str]] = None,
) -> Tuple[EnviHeader, bytes]:
    """
    Encode a cube; the exact inverse of `read_cube`.

    Args:
        cube: Cube to encode
        data_type: ENVI type code; uint16 for integral counts, float64 otherwise
        interleave: On-disk layout, defaults to the cube's
        byte_order: 0 little endian, 1 big endian

    Returns:
        (header, payload bytes)
    """
    data_type = _default_data_type(cube) if data_type is None else data_type
    if data_type not in ENVI_DATA_TYPES:
        raise UnsupportedDataTypeError(f"data type {data_type} is not supported")
    interleave = interleave or cube.interleave

    header = EnviHeader(
        samples=cube.cols,
        lines=cube.rows,
        bands=cube.bands,
        data_type=data_type,
        interleave=interleave,
        byte_order=byte_order,
        wavelengths_nm=tuple(float(w) for w in cube.grid.wavelengths_nm),
        data_units=cube.unit.value,
        bit_depth=cube.bit_depth,
        extra=extra or {},
    )
    disk = np.transpose(cube.data, _TO_DISK[interleave])
    if data_type in INTEGER_DATA_TYPES:
        info = np.iinfo(np.dtype(ENVI_DATA_TYPES[data_type]))
        if np.any(disk != np.round(disk)) or disk.min() < info.min or disk.max() > info.max:
            raise InputValidationError(f"cube values do not fit data type {data_type}")
    payload = np.ascontiguousarray(disk).astype(header.numpy_dtype).tobytes()
    return header, payload


def header_path_for(data_path: Path) -> Path:
    return data_path.with_suffix(".hdr")


def save_cube(cube: HyperCube, data_path: Union[str, Path], **options) -> Path:
    """Write `<name>.hdr` and the raw data file; returns the header path."""
    data_path = Path(data_path)
    header, payload = write_cube(cube, **options)
    header_path = header_path_for(data_path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(serialize_header(header), encoding="utf-8")
    data_path.write_bytes(payload)
    logger.info(
        "Wrote cube",
        path=str(data_path),
        shape=[cube.rows, cube.cols, cube.bands],
        data_type=header.data_type,
        interleave=header.interleave.value,
    )
    return header_path


def load_cube(path: Union[str, Path], grid: Optional[WavelengthGrid] = None) -> HyperCube:
    """
    Read a cube from its data file or its `.hdr` file.

    Raises:
        PathValidationError: If the header or data file is missing
    """
    path = Path(path)
    if path.suffix == ".hdr":
        header_path = path
        candidates = [path.with_suffix(suffix) for suffix in DATA_SUFFIXES]
        data_path = next((c for c in candidates if c.is_file() and c != path), None)
        if data_path is None:
            raise PathValidationError(f"no data file next to {path}", path=str(path))
    else:
        header_path, data_path = header_path_for(path), path
    for required in (header_path, data_path):
        if not required.is_file():
            raise PathValidationError(f"file not found: {required}", path=str(required))

    header = parse_envi_header(header_path.read_bytes(), source=str(header_path))
    cube = read_cube(header, data_path.read_bytes(), grid)
    logger.debug("Read cube", path=str(data_path), shape=[cube.rows, cube.cols, cube.bands], unit=cube.unit.value)
    return cube

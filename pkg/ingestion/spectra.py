"""Columnar ASCII spectra and downwelling irradiance logs.

A spectrum file is a `#`-prefixed `key: value` header followed by
`wavelength_nm value` rows. An irradiance log is either a set of such files
carrying `timestamp_s`, or one table whose header row is
`timestamp_s <wavelength> <wavelength> ...`.
"""
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.exceptions import (
    NonMonotoneTimeError,
    NonMonotoneWavelengthError,
    ParseError,
    PathValidationError,
)
from core.logging import get_logger
from schemas.records import SpectrumFile
from schemas.spectral import IrradianceSample, IrradianceSeries, Spectrum, SpectralUnit, WavelengthGrid

logger = get_logger(__name__)

LOG_TIME_COLUMN = "timestamp_s"
SPECTRUM_SUFFIXES = (".txt", ".csv", ".asd", ".sig")

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Shortest text that parses back to the same double."""
    return repr(float(value))


def _decode(text: Union[str, bytes], source: Optional[str]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"file is not valid UTF-8 at byte {exc.start}", source=source)


def split_text(text: Union[str, bytes], source: Optional[str] = None):
    """
    Separate header entries from data rows.

    Returns:
        (header, rows) with header as [(key, value, line)] and rows as
        [(tokens, line)]; `#` lines without a colon are comments
    """
    header: List[Tuple[str, str, int]] = []
    rows: List[Tuple[List[str], int]] = []
    for line_no, raw in enumerate(_decode(text, source).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                header.append((key.strip(), value.strip(), line_no))
            continue
        tokens = line.replace(",", " ").split()
        if not tokens:
            raise ParseError("row holds no values", line=line_no, source=source)
        rows.append((tokens, line_no))
    return header, rows


def parse_float(token: str, line: int, source: Optional[str], what: str = "value") -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not a number", line=line, source=source)
    if not np.isfinite(value):
        raise ParseError(f"{what} must be finite", line=line, source=source)
    return value


def parse_unit(value: str, line: int, source: Optional[str]) -> SpectralUnit:
    try:
        return SpectralUnit(value)
    except ValueError:
        raise ParseError(f"unknown unit {value!r}", line=line, source=source)


def parse_columns(rows, source: Optional[str]) -> Tuple[np.ndarray, np.ndarray]:
    """Two numeric columns with strictly increasing wavelengths."""
    wavelengths: List[float] = []
    values: List[float] = []
    for tokens, line_no in rows:
        if len(tokens) != 2:
            raise ParseError(f"expected 2 columns, found {len(tokens)}", line=line_no, source=source)
        wavelength = parse_float(tokens[0], line_no, source, "wavelength")
        if wavelengths and wavelength <= wavelengths[-1]:
            raise NonMonotoneWavelengthError(
                f"wavelength {wavelength} nm does not increase",
                line=line_no,
                source=source,
            )
        wavelengths.append(wavelength)
        values.append(parse_float(tokens[1], line_no, source))
    if not wavelengths:
        raise ParseError("file holds no spectral rows", source=source)
    return np.array(wavelengths), np.array(values)


def build_spectrum(wavelengths, values, unit: SpectralUnit, source: Optional[str]) -> Spectrum:
    try:
        return Spectrum.from_arrays(wavelengths, values, unit)
    except ValidationError as exc:
        raise ParseError(f"spectrum rejected: {exc.errors()[0]['msg']}", source=source)


def parse_spectrum_text(
    text: Union[str, bytes],
    source: Optional[str] = None,
    default_unit: Optional[SpectralUnit] = None,
) -> SpectrumFile:
    """
    Parse a two-column spectrum.

    Header keys `unit` and `timestamp_s` are interpreted; all others are kept
    as metadata.

    Raises:
        NonMonotoneWavelengthError: On repeated or decreasing wavelengths
        ParseError: On any other malformed content, with its line number
    """
    header, rows = split_text(text, source)
    metadata: Dict[str, str] = {}
    unit = default_unit
    timestamp = None
    for key, value, line_no in header:
        if key == "unit":
            unit = parse_unit(value, line_no, source)
        elif key == LOG_TIME_COLUMN:
            timestamp = parse_float(value, line_no, source, "timestamp")
        else:
            metadata[key] = value
    if unit is None:
        raise ParseError("missing '# unit:' header", source=source)

    wavelengths, values = parse_columns(rows, source)
    return SpectrumFile(
        spectrum=build_spectrum(wavelengths, values, unit, source),
        metadata=metadata,
        timestamp_s=timestamp,
    )


def format_spectrum_text(
    spectrum: Spectrum,
    metadata: Optional[Dict[str, str]] = None,
    timestamp_s: Optional[float] = None,
) -> str:
    lines = [f"# unit: {spectrum.unit.value}"]
    if timestamp_s is not None:
        lines.append(f"# {LOG_TIME_COLUMN}: {format_float(timestamp_s)}")
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}: {value}")
    lines.extend(
        f"{format_float(w)} {format_float(v)}" for w, v in zip(spectrum.wavelengths_nm, spectrum.values)
    )
    return "\n".join(lines) + "\n"


def _require_file(path: Path):
    if not path.is_file():
        raise PathValidationError(f"file not found: {path}", path=str(path))


def read_spectrum_file(path: PathLike, default_unit: Optional[SpectralUnit] = None) -> SpectrumFile:
    path = Path(path)
    _require_file(path)
    return parse_spectrum_text(path.read_bytes(), source=str(path), default_unit=default_unit)


def write_spectrum_file(
    path: PathLike,
    spectrum: Spectrum,
    metadata: Optional[Dict[str, str]] = None,
    timestamp_s: Optional[float] = None,
) -> Path:
    """Write a spectrum file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_spectrum_text(spectrum, metadata, timestamp_s), encoding="utf-8")
    logger.debug("Wrote spectrum", path=str(path), unit=spectrum.unit.value, bands=len(spectrum.grid))
    return path


def parse_irradiance_table(text: Union[str, bytes], source: Optional[str] = None) -> IrradianceSeries:
    """
    Parse a multi-column irradiance log.

    The first row names `timestamp_s` and the band wavelengths; every other
    row is a timestamp followed by one irradiance per band.
    """
    _, rows = split_text(text, source)
    if not rows or rows[0][0][0] != LOG_TIME_COLUMN:
        raise ParseError(f"irradiance table must start with a '{LOG_TIME_COLUMN}' header row", source=source)
    head, head_line = rows[0]
    wavelengths = [parse_float(t, head_line, source, "wavelength") for t in head[1:]]
    if not wavelengths:
        raise ParseError("irradiance table lists no wavelengths", line=head_line, source=source)
    if any(b <= a for a, b in zip(wavelengths, wavelengths[1:])):
        raise NonMonotoneWavelengthError("header wavelengths must increase", line=head_line, source=source)
    try:
        grid = WavelengthGrid(wavelengths_nm=wavelengths)
    except ValidationError as exc:
        raise ParseError(f"wavelength header rejected: {exc.errors()[0]['msg']}", line=head_line, source=source)

    samples = []
    previous = None
    for tokens, line_no in rows[1:]:
        if len(tokens) != len(wavelengths) + 1:
            raise ParseError(
                f"expected {len(wavelengths) + 1} columns, found {len(tokens)}",
                line=line_no,
                source=source,
            )
        t = parse_float(tokens[0], line_no, source, "timestamp")
        if previous is not None and t <= previous:
            raise NonMonotoneTimeError(f"timestamp {t} s does not increase", line=line_no, source=source)
        previous = t
        values = [parse_float(v, line_no, source) for v in tokens[1:]]
        try:
            spectrum = Spectrum(grid=grid, values=values, unit=SpectralUnit.IRRADIANCE)
        except ValidationError as exc:
            raise ParseError(f"irradiance row rejected: {exc.errors()[0]['msg']}", line=line_no, source=source)
        samples.append(IrradianceSample(timestamp_s=t, spectrum=spectrum))
    if not samples:
        raise ParseError("irradiance table holds no rows", source=source)
    return IrradianceSeries(samples=samples)


def format_irradiance_table(series: IrradianceSeries) -> str:
    grid = series.samples[0].spectrum.grid
    lines = [" ".join([LOG_TIME_COLUMN] + [format_float(w) for w in grid.wavelengths_nm])]
    for sample in series.samples:
        lines.append(
            " ".join([format_float(sample.timestamp_s)] + [format_float(v) for v in sample.spectrum.values])
        )
    return "\n".join(lines) + "\n"


def series_from_files(files: Sequence[SpectrumFile], sources: Sequence[str]) -> IrradianceSeries:
    """Sort timestamped irradiance spectra into a validated series."""
    entries = []
    for spectrum_file, source in zip(files, sources):
        if spectrum_file.timestamp_s is None:
            raise ParseError(f"irradiance spectrum lacks '# {LOG_TIME_COLUMN}:'", source=source)
        if spectrum_file.spectrum.unit != SpectralUnit.IRRADIANCE:
            raise ParseError(f"expected unit {SpectralUnit.IRRADIANCE.value}", source=source)
        entries.append((spectrum_file.timestamp_s, source, spectrum_file.spectrum))
    entries.sort(key=lambda e: e[0])
    for (t0, _, _), (t1, source, _) in zip(entries, entries[1:]):
        if t1 == t0:
            raise NonMonotoneTimeError(f"timestamp {t1} s appears twice", source=source)
    grid = entries[0][2].grid if entries else None
    for _, source, spectrum in entries:
        if not spectrum.grid.same_as(grid):
            raise ParseError("irradiance spectra must share one wavelength grid", source=source)
    return IrradianceSeries(
        samples=[IrradianceSample(timestamp_s=t, spectrum=s) for t, _, s in entries]
    )


def _spectrum_paths(directory: Path) -> List[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in SPECTRUM_SUFFIXES)


def read_irradiance_log(paths: Union[PathLike, Iterable[PathLike]]) -> IrradianceSeries:
    """
    Load downwelling irradiance as a time series.

    Args:
        paths: A multi-column log file, a single spectrum file, a directory
            of timestamped spectrum files, or a list of such files

    Returns:
        IrradianceSeries sorted by time
    """
    if isinstance(paths, (str, Path)):
        path = Path(paths)
        if path.is_dir():
            files = _spectrum_paths(path)
            if not files:
                raise PathValidationError(f"no spectrum files in {path}", path=str(path))
        else:
            _require_file(path)
            content = path.read_bytes()
            _, rows = split_text(content, str(path))
            if rows and rows[0][0][0] == LOG_TIME_COLUMN:
                series = parse_irradiance_table(content, source=str(path))
                logger.info("Loaded irradiance log", path=str(path), samples=len(series))
                return series
            files = [path]
    else:
        files = [Path(p) for p in paths]

    for path in files:
        _require_file(path)
    parsed = [
        read_spectrum_file(p, default_unit=SpectralUnit.IRRADIANCE) for p in files
    ]
    series = series_from_files(parsed, [str(p) for p in files])
    logger.info("Loaded irradiance spectra", files=len(files), samples=len(series))
    return series


def write_irradiance_log(path: PathLike, series: IrradianceSeries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_irradiance_table(series), encoding="utf-8")
    return path

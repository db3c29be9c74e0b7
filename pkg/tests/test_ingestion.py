"""Tests for ENVI cubes, text spectra, irradiance logs, signatures and manifests."""
import string

import numpy as np
import pytest

from core.exceptions import (
    BadMagicError,
    HyperspecError,
    MalformedListError,
    MissingKeyError,
    MissingMetadataKeyError,
    NonMonotoneTimeError,
    NonMonotoneWavelengthError,
    ParseError,
    PathValidationError,
    SizeMismatchError,
    UnsupportedDataTypeError,
)
from ingestion.envi import load_cube, parse_envi_header, read_cube, save_cube, serialize_header, write_cube
from ingestion.manifests import (
    format_roi_line,
    load_sweep,
    metadata_for,
    parse_roi_line,
    read_mask,
    read_metadata_file,
    read_roi_file,
    read_scene_file,
    read_sweep_manifest,
    roi_tokens,
    write_mask,
    write_roi_file,
    write_sweep_manifest,
)
from ingestion.signatures import (
    export_library,
    format_signature_record,
    load_library,
    parse_signature_record,
    slugify,
)
from ingestion.spectra import (
    format_irradiance_table,
    format_spectrum_text,
    parse_irradiance_table,
    parse_spectrum_text,
    read_irradiance_log,
    write_spectrum_file,
)
from schemas.quality import Roi, RoiSummary
from schemas.records import SignatureRecord
from schemas.spectral import (
    HyperCube,
    Interleave,
    IrradianceSample,
    IrradianceSeries,
    Spectrum,
    SpectralUnit,
    WavelengthGrid,
)

MINIMAL_HEADER = """ENVI
samples = 640
lines = 2
bands = 3
header offset = 0
data type = 12
interleave = bil
byte order = 0
wavelength = {400.0, 700.0, 1000.0}
"""


def assert_same_record(a: SignatureRecord, b: SignatureRecord):
    assert np.array_equal(a.reflectance.wavelengths_nm, b.reflectance.wavelengths_nm)
    assert np.array_equal(a.reflectance.values, b.reflectance.values)
    assert a.reflectance.unit == b.reflectance.unit
    assert a.metadata == b.metadata
    assert a.roi == b.roi
    assert a.quality == b.quality
    assert a.timestamp_s == b.timestamp_s


def random_cube(rng):
    """Small cube with a random storage type, interleave and byte order."""
    data_type = int(rng.choice([1, 2, 4, 5, 12]))
    shape = tuple(int(n) for n in rng.integers(1, 5, size=3))
    unit, bit_depth = SpectralUnit.RADIANCE, None
    if data_type == 1:
        data = rng.integers(0, 256, size=shape)
        unit, bit_depth = SpectralUnit.DIGITAL_COUNT, 8
    elif data_type == 12:
        data = rng.integers(0, 65536, size=shape)
        unit, bit_depth = SpectralUnit.DIGITAL_COUNT, 16
    elif data_type == 2:
        data = rng.integers(-32768, 32768, size=shape)
    elif data_type == 4:
        data = rng.standard_normal(shape).astype(np.float32)
    else:
        data = rng.standard_normal(shape) * 10.0 ** rng.integers(-5, 5)
    wavelengths = 300.0 + np.cumsum(rng.uniform(0.1, 10.0, size=shape[2]))
    cube = HyperCube.from_array(data, WavelengthGrid(wavelengths_nm=wavelengths), unit, bit_depth=bit_depth)
    options = dict(
        data_type=data_type,
        interleave=Interleave(rng.choice(["bsq", "bil", "bip"])),
        byte_order=int(rng.integers(0, 2)),
    )
    return cube, options


def mutate(text: str, rng) -> str:
    """Replace, delete or insert a handful of characters, or truncate."""
    chars = list(text)
    alphabet = string.printable + "{}=,;"
    for _ in range(int(rng.integers(1, 5))):
        if not chars:
            break
        position = int(rng.integers(0, len(chars)))
        action = int(rng.integers(0, 4))
        if action == 0:
            chars[position] = alphabet[int(rng.integers(0, len(alphabet)))]
        elif action == 1:
            del chars[position]
        elif action == 2:
            chars.insert(position, alphabet[int(rng.integers(0, len(alphabet)))])
        else:
            chars = chars[:position]
    return "".join(chars)


class TestEnviHeader:
    """Test header parsing and serialization."""

    def test_minimal_header(self):
        """Test the documented example header."""
        header = parse_envi_header(MINIMAL_HEADER)
        assert (header.samples, header.lines, header.bands) == (640, 2, 3)
        assert header.data_type == 12
        assert header.interleave == Interleave.BIL
        assert header.wavelengths_nm == (400.0, 700.0, 1000.0)
        assert header.numpy_dtype == "<u2"

    def test_multiline_list_comments_and_case(self):
        """Test brace lists across lines, comments and key case."""
        text = "ENVI\n; acquired on the bench\nSamples = 2\nLINES = 1\nbands = 3\ndata type = 4\n" \
               "interleave = BSQ\nwavelength = {\n 450.5,\n 550.25,\n 650.125 }\n"
        header = parse_envi_header(text)
        assert header.interleave == Interleave.BSQ
        assert header.wavelengths_nm == (450.5, 550.25, 650.125)

    def test_unknown_keys_are_kept(self):
        """Test that extra entries survive a round trip."""
        header = parse_envi_header(MINIMAL_HEADER + "description = {field line 7}\nsensor type = Nano\n")
        assert header.extra == {"description": "{field line 7}", "sensor type": "Nano"}
        assert parse_envi_header(serialize_header(header)) == header

    def test_bad_magic(self):
        """Test that the ENVI line is required."""
        with pytest.raises(BadMagicError):
            parse_envi_header(MINIMAL_HEADER.replace("ENVI", "ENVY", 1))

    @pytest.mark.parametrize("key", ["samples", "lines", "bands", "interleave", "data type"])
    def test_missing_required_key(self, key):
        """Test each required key."""
        text = "\n".join(line for line in MINIMAL_HEADER.splitlines() if not line.startswith(key))
        with pytest.raises(MissingKeyError) as excinfo:
            parse_envi_header(text)
        assert excinfo.value.key == key

    def test_malformed_list(self):
        """Test a non-numeric wavelength entry."""
        with pytest.raises(MalformedListError):
            parse_envi_header(MINIMAL_HEADER.replace("700.0", "seven hundred"))

    def test_unterminated_list(self):
        """Test a list that never closes."""
        with pytest.raises(MalformedListError):
            parse_envi_header(MINIMAL_HEADER.replace("1000.0}", "1000.0"))

    def test_non_monotone_wavelengths(self):
        """Test decreasing header wavelengths."""
        with pytest.raises(NonMonotoneWavelengthError) as excinfo:
            parse_envi_header(MINIMAL_HEADER.replace("700.0", "300.0"))
        assert excinfo.value.line == 9

    def test_wavelength_count_mismatch(self):
        """Test a list shorter than the band count."""
        with pytest.raises(ParseError):
            parse_envi_header(MINIMAL_HEADER.replace("bands = 3", "bands = 4"))

    def test_duplicate_key(self):
        """Test that a key cannot appear twice."""
        with pytest.raises(ParseError) as excinfo:
            parse_envi_header(MINIMAL_HEADER + "samples = 10\n")
        assert excinfo.value.line == 10

    def test_non_integer_value(self):
        """Test an integer key holding text."""
        with pytest.raises(ParseError):
            parse_envi_header(MINIMAL_HEADER.replace("lines = 2", "lines = two"))


class TestEnviCube:
    """Test binary cube encoding."""

    def test_bil_byte_layout(self, make_cube):
        """Test the documented 8-byte BIL example."""
        grid = WavelengthGrid(wavelengths_nm=[500.0, 600.0])
        cube = make_cube([[[1.0, 2.0], [3.0, 4.0]]], grid, SpectralUnit.DIGITAL_COUNT)
        header, payload = write_cube(cube, data_type=12, interleave=Interleave.BIL)
        assert payload == bytes([1, 0, 3, 0, 2, 0, 4, 0])
        assert header.samples == 2 and header.lines == 1 and header.bands == 2

    @pytest.mark.parametrize("interleave", list(Interleave))
    def test_interleave_matches_index_arithmetic(self, make_cube, interleave):
        """Test sample order against a direct offset computation."""
        lines, samples, bands = 2, 3, 4
        data = np.arange(lines * samples * bands, dtype=float).reshape(lines, samples, bands)
        grid = WavelengthGrid.linear(400.0, 700.0, bands)
        cube = make_cube(data, grid, SpectralUnit.DIGITAL_COUNT)

        _, payload = write_cube(cube, data_type=12, interleave=interleave)

        flat = np.frombuffer(payload, dtype="<u2")
        for l in range(lines):
            for s in range(samples):
                for b in range(bands):
                    if interleave == Interleave.BSQ:
                        offset = (b * lines + l) * samples + s
                    elif interleave == Interleave.BIL:
                        offset = (l * bands + b) * samples + s
                    else:
                        offset = (l * samples + s) * bands + b
                    assert flat[offset] == data[l, s, b]

    def test_layouts_read_back_equal(self, make_cube):
        """Test that BIL and BSQ differ on disk but decode identically."""
        grid = WavelengthGrid.linear(400.0, 700.0, 4)
        data = np.arange(24, dtype=float).reshape(2, 3, 4)
        cube = make_cube(data, grid, SpectralUnit.DIGITAL_COUNT)
        bil_header, bil = write_cube(cube, interleave=Interleave.BIL)
        bsq_header, bsq = write_cube(cube, interleave=Interleave.BSQ)
        assert bil != bsq
        assert np.array_equal(read_cube(bil_header, bil).data, read_cube(bsq_header, bsq).data)

    def test_default_types(self, grid, make_cube):
        """Test uint16 for integral counts and float64 otherwise."""
        counts = make_cube(np.full((1, 1, len(grid)), 12.0), grid, SpectralUnit.DIGITAL_COUNT)
        radiance = make_cube(np.full((1, 1, len(grid)), 0.25), grid)
        assert write_cube(counts)[0].data_type == 12
        assert write_cube(radiance)[0].data_type == 5

    def test_size_mismatch(self):
        """Test a truncated payload."""
        header = parse_envi_header(MINIMAL_HEADER)
        with pytest.raises(SizeMismatchError):
            read_cube(header, bytes(header.payload_size - 2))

    def test_header_offset(self):
        """Test that leading bytes are skipped."""
        header = parse_envi_header(MINIMAL_HEADER.replace("header offset = 0", "header offset = 16"))
        cube = read_cube(header, bytes(16) + bytes(header.payload_size))
        assert cube.data.shape == (2, 640, 3)

    def test_unsupported_type(self):
        """Test a data type code outside the supported set."""
        header = parse_envi_header(MINIMAL_HEADER.replace("data type = 12", "data type = 3"))
        with pytest.raises(UnsupportedDataTypeError):
            read_cube(header, bytes(640 * 2 * 3 * 4))

    def test_missing_wavelengths_need_a_grid(self):
        """Test cubes without wavelengths in the header."""
        text = "\n".join(line for line in MINIMAL_HEADER.splitlines() if not line.startswith("wavelength"))
        header = parse_envi_header(text)
        with pytest.raises(MissingKeyError):
            read_cube(header, bytes(header.payload_size))
        grid = WavelengthGrid(wavelengths_nm=[410.0, 520.0, 630.0])
        assert read_cube(header, bytes(header.payload_size), grid).grid.same_as(grid)

    def test_units_from_header(self, grid, make_cube):
        """Test that the unit tag is written and read back."""
        cube = make_cube(np.full((1, 2, len(grid)), 0.4), grid, SpectralUnit.REFLECTANCE)
        header, payload = write_cube(cube)
        assert read_cube(parse_envi_header(serialize_header(header)), payload).unit == SpectralUnit.REFLECTANCE

    def test_big_endian(self, make_cube):
        """Test byte order 1."""
        grid = WavelengthGrid(wavelengths_nm=[500.0])
        cube = make_cube([[[258.0]]], grid, SpectralUnit.DIGITAL_COUNT)
        header, payload = write_cube(cube, data_type=12, byte_order=1)
        assert payload == bytes([1, 2])
        assert read_cube(header, payload).data[0, 0, 0] == 258.0

    def test_counts_without_bit_depth_use_sensor_depth(self, make_cube):
        """Test that an undeclared depth defaults to 12 bits and 5000 counts is rejected."""
        grid = WavelengthGrid(wavelengths_nm=[500.0, 600.0])
        header, payload = write_cube(make_cube([[[4095.0, 5000.0]]], grid, SpectralUnit.DIGITAL_COUNT), data_type=12)
        assert "bit depth" not in serialize_header(header)
        with pytest.raises(ParseError, match="4095"):
            read_cube(header, payload)

        header, payload = write_cube(make_cube([[[4095.0, 12.0]]], grid, SpectralUnit.DIGITAL_COUNT), data_type=12)
        assert read_cube(header, payload).bit_depth == 12

    def test_save_and_load(self, tmp_path, grid, make_cube):
        """Test the header/data file pair on disk."""
        cube = make_cube(np.full((2, 3, len(grid)), 7.0), grid, SpectralUnit.DIGITAL_COUNT, bit_depth=12)
        header_path = save_cube(cube, tmp_path / "scene.img")
        assert header_path.name == "scene.hdr"
        for path in (tmp_path / "scene.img", header_path):
            loaded = load_cube(path)
            assert np.array_equal(loaded.data, cube.data)
            assert loaded.bit_depth == 12

    def test_load_missing(self, tmp_path):
        """Test a missing data file."""
        with pytest.raises(PathValidationError):
            load_cube(tmp_path / "nothing.img")

    def test_randomized_round_trips(self):
        """Test bit-exact round trips over 10,000 random cubes."""
        rng = np.random.default_rng(20240601)
        for _ in range(10_000):
            cube, options = random_cube(rng)
            header, payload = write_cube(cube, **options)
            parsed = parse_envi_header(serialize_header(header))
            assert parsed == header
            back = read_cube(parsed, payload)
            assert np.array_equal(back.data, cube.data)
            assert back.grid.same_as(cube.grid)
            assert write_cube(back, **options)[1] == payload

    def test_fuzzed_headers_fail_cleanly(self):
        """Test that mutated headers either parse or raise a toolkit error."""
        rng = np.random.default_rng(7)
        header, payload = write_cube(
            HyperCube.from_array(
                np.ones((2, 3, 3)), WavelengthGrid(wavelengths_nm=[400.0, 700.0, 1000.0]), SpectralUnit.DIGITAL_COUNT
            )
        )
        text = serialize_header(header) + "description = {bench run}\n"
        for _ in range(2000):
            try:
                read_cube(parse_envi_header(mutate(text, rng)), payload)
            except HyperspecError:
                pass

    def test_fuzzed_bytes_fail_cleanly(self):
        """Test non-UTF-8 header bytes."""
        with pytest.raises(ParseError):
            parse_envi_header(b"ENVI\nsamples = \xff\xfe\n")


class TestSpectrumFiles:
    """Test two-column spectrum files."""

    def test_parse_with_header(self):
        """Test unit, timestamp and metadata handling."""
        text = "# unit: Irradiance_W_m2_nm\n# timestamp_s: 12.5\n# instrument: SVC\n# a comment\n" \
               "400.0 1.02\n401.0, 1.03\n\n"
        parsed = parse_spectrum_text(text)
        assert parsed.spectrum.unit == SpectralUnit.IRRADIANCE
        assert parsed.timestamp_s == 12.5
        assert parsed.metadata == {"instrument": "SVC"}
        assert parsed.spectrum.values.tolist() == [1.02, 1.03]

    def test_repeated_wavelength_names_line(self):
        """Test that a repeated wavelength is reported with its line."""
        text = "# unit: Radiance_W_m2_sr_nm\n400.0 1.0\n410.0 1.1\n410.0 1.2\n"
        with pytest.raises(NonMonotoneWavelengthError) as excinfo:
            parse_spectrum_text(text)
        assert excinfo.value.line == 4

    def test_unit_required_without_default(self):
        """Test the unit header rule."""
        with pytest.raises(ParseError):
            parse_spectrum_text("400.0 1.0\n500.0 2.0\n")
        parsed = parse_spectrum_text("400.0 1.0\n500.0 2.0\n", default_unit=SpectralUnit.RESPONSIVITY)
        assert parsed.spectrum.unit == SpectralUnit.RESPONSIVITY

    @pytest.mark.parametrize(
        "text",
        [
            "# unit: Kelvin\n400 1\n",
            "# unit: Radiance_W_m2_sr_nm\n400 1 2\n",
            "# unit: Radiance_W_m2_sr_nm\n400 abc\n",
            "# unit: Radiance_W_m2_sr_nm\n400 nan\n",
            "# unit: Radiance_W_m2_sr_nm\n",
            "# unit: Reflectance_unitless\n400 3.0\n",
        ],
    )
    def test_malformed(self, text):
        """Test structured errors for malformed content."""
        with pytest.raises(ParseError):
            parse_spectrum_text(text)

    def test_randomized_round_trips(self):
        """Test that written spectra read back to the same doubles."""
        rng = np.random.default_rng(99)
        units = list(SpectralUnit)
        for _ in range(2000):
            n = int(rng.integers(1, 40))
            wl = 350.0 + np.cumsum(rng.uniform(1e-3, 20.0, size=n))
            unit = units[int(rng.integers(0, len(units)))]
            if unit == SpectralUnit.REFLECTANCE:
                values = rng.uniform(0.0, 1.5, size=n)
            else:
                values = rng.standard_normal(n) * 10.0 ** rng.integers(-12, 6)
            spectrum = Spectrum.from_arrays(wl, values, unit)
            timestamp = float(rng.uniform(0, 1e5)) if rng.random() < 0.5 else None
            metadata = {"k" + str(i): "".join(rng.choice(list(string.ascii_letters), 6)) for i in range(3)}

            parsed = parse_spectrum_text(format_spectrum_text(spectrum, metadata, timestamp))

            assert np.array_equal(parsed.spectrum.wavelengths_nm, wl)
            assert np.array_equal(parsed.spectrum.values, spectrum.values)
            assert parsed.spectrum.unit == unit
            assert parsed.timestamp_s == timestamp
            assert parsed.metadata == metadata

    def test_fuzzed_text_fails_cleanly(self):
        """Test that mutated spectrum text never crashes the parser."""
        rng = np.random.default_rng(5)
        spectrum = Spectrum.from_arrays([400.0, 500.0, 600.0], [0.1, 0.2, 0.3], SpectralUnit.REFLECTANCE)
        text = format_spectrum_text(spectrum, {"make": "Ford"}, 3.0)
        for _ in range(2000):
            try:
                parse_spectrum_text(mutate(text, rng))
            except HyperspecError:
                pass


class TestIrradianceLogs:
    """Test timestamped irradiance inputs."""

    def test_table(self):
        """Test the multi-column log."""
        text = "timestamp_s 400.0 500.0 600.0\n0.0 1.0 1.1 1.2\n2.0 1.0 1.05 1.15\n"
        series = parse_irradiance_table(text)
        assert series.timestamps.tolist() == [0.0, 2.0]
        assert series.samples[1].spectrum.values.tolist() == [1.0, 1.05, 1.15]

    def test_table_time_must_increase(self):
        """Test repeated table timestamps."""
        text = "timestamp_s 400.0 500.0\n0.0 1.0 1.1\n0.0 1.0 1.1\n"
        with pytest.raises(NonMonotoneTimeError) as excinfo:
            parse_irradiance_table(text)
        assert excinfo.value.line == 3

    def test_table_round_trip(self, grid):
        """Test writing and re-reading a log table."""
        rng = np.random.default_rng(4)
        samples = [
            IrradianceSample(
                timestamp_s=2.0 * i + rng.uniform(0, 0.1),
                spectrum=Spectrum(grid=grid, values=rng.uniform(0.2, 1.5, len(grid)), unit=SpectralUnit.IRRADIANCE),
            )
            for i in range(5)
        ]
        series = IrradianceSeries(samples=samples)
        back = parse_irradiance_table(format_irradiance_table(series))
        assert np.array_equal(back.timestamps, series.timestamps)
        for a, b in zip(back.samples, series.samples):
            assert np.array_equal(a.spectrum.values, b.spectrum.values)

    def test_directory_sorted_by_time(self, tmp_path, downwelling):
        """Test a directory of spectrum files in arbitrary name order."""
        write_spectrum_file(tmp_path / "a.txt", downwelling.with_values(2.0 * downwelling.values), timestamp_s=4.0)
        write_spectrum_file(tmp_path / "b.txt", downwelling, timestamp_s=0.0)
        series = read_irradiance_log(tmp_path)
        assert series.timestamps.tolist() == [0.0, 4.0]
        assert np.array_equal(series.samples[0].spectrum.values, downwelling.values)

    def test_directory_duplicate_time(self, tmp_path, downwelling):
        """Test two files with one timestamp."""
        write_spectrum_file(tmp_path / "a.txt", downwelling, timestamp_s=1.0)
        write_spectrum_file(tmp_path / "b.txt", downwelling, timestamp_s=1.0)
        with pytest.raises(NonMonotoneTimeError):
            read_irradiance_log(tmp_path)

    def test_single_file_and_table_detection(self, tmp_path, downwelling):
        """Test that a file path is read as a table or as one spectrum."""
        single = write_spectrum_file(tmp_path / "e.txt", downwelling, timestamp_s=0.0)
        assert len(read_irradiance_log(single)) == 1
        table = tmp_path / "log.txt"
        table.write_text("timestamp_s 400.0 500.0\n0.0 1.0 1.1\n2.0 1.0 1.2\n")
        assert len(read_irradiance_log(table)) == 2

    def test_missing_timestamp(self, tmp_path, downwelling):
        """Test that log spectra need a timestamp."""
        write_spectrum_file(tmp_path / "a.txt", downwelling)
        with pytest.raises(ParseError):
            read_irradiance_log(tmp_path)


class TestSignatureRecords:
    """Test signature record files and libraries."""

    @pytest.fixture
    def record(self, grid):
        rng = np.random.default_rng(8)
        return SignatureRecord(
            reflectance=Spectrum(grid=grid, values=rng.uniform(0.02, 0.9, len(grid)), unit=SpectralUnit.REFLECTANCE),
            roi=Roi.rect("hood", 10, 20, 14, 30),
            timestamp_s=12.25,
            metadata={"name": "hood", "make": "Ford", "model": "F-150", "color": "red"},
            quality=RoiSummary(
                roi_name="hood",
                total_pixels=55,
                kept_fraction=53 / 55,
                flag_counts={"saturated": 0, "glint": 2, "shadow": 0, "adjacency": 0},
                notes=("2 glint pixel(s) excluded",),
            ),
        )

    def test_round_trip(self, record):
        """Test that every field survives text serialization."""
        assert_same_record(parse_signature_record(format_signature_record(record)), record)

    def test_polygon_roi_round_trip(self, record):
        """Test polygon ROIs in the reserved header."""
        poly = record.model_copy(update={"roi": Roi.polygon("door", [(30, 5), (30, 15), (40, 10)])})
        assert parse_signature_record(format_signature_record(poly)).roi == poly.roi

    def test_name_required(self, record):
        """Test the mandatory name entry."""
        text = "\n".join(line for line in format_signature_record(record).splitlines() if "# name:" not in line)
        with pytest.raises(MissingMetadataKeyError):
            parse_signature_record(text)

    def test_unknown_format(self, record):
        """Test a foreign format tag."""
        text = format_signature_record(record).replace("hyperspec-signature/1", "other/9")
        with pytest.raises(ParseError):
            parse_signature_record(text)

    def test_export_and_load_library(self, tmp_path, grid):
        """Test a 14-record library written and read back in order."""
        rng = np.random.default_rng(14)
        records = [
            SignatureRecord(
                reflectance=Spectrum(grid=grid, values=rng.uniform(0.02, 0.9, len(grid)), unit=SpectralUnit.REFLECTANCE),
                metadata={"name": f"Vehicle {i} / paint", "color": "red" if i % 2 else "blue"},
            )
            for i in range(1, 15)
        ]
        paths = export_library(records, tmp_path / "library")
        assert [p.name for p in paths][:2] == ["001_vehicle-1-paint.sig", "002_vehicle-2-paint.sig"]
        assert paths[-1].name == "014_vehicle-14-paint.sig"

        loaded = load_library(tmp_path / "library")
        assert len(loaded) == 14
        for a, b in zip(loaded, records):
            assert_same_record(a, b)

    def test_slugify(self):
        """Test file-name slugs."""
        assert slugify("Ford F-150 (red)") == "ford-f-150-red"
        assert slugify("***") == "signature"

    def test_fuzzed_records_fail_cleanly(self, record):
        """Test that mutated records never crash the parser."""
        rng = np.random.default_rng(12)
        text = format_signature_record(record)
        for _ in range(1000):
            try:
                parse_signature_record(mutate(text, rng))
            except HyperspecError:
                pass


class TestManifests:
    """Test sweep manifests, ROI files, scenes, metadata and masks."""

    def test_sweep_manifest_round_trip(self, tmp_path, sensor, known_qe):
        """Test frames written with a manifest load back as steps."""
        from services.forward_sim import simulate_sweep

        steps = simulate_sweep(sensor, known_qe, [600.0, 650.0, 700.0], cols=2)
        rows = []
        for i, step in enumerate(steps, start=1):
            save_cube(step.frame, tmp_path / f"step_{i:03d}.img")
            rows.append({
                "lambda_nm": step.lambda_nm,
                "frame": f"step_{i:03d}.img",
                "flux_ref_w": step.flux_ref_w,
                "exposure_ref_s": step.exposure_ref_s,
                "bandwidth_ref_nm": step.bandwidth_ref_nm,
            })
        manifest = write_sweep_manifest(tmp_path / "manifest.csv", rows)

        loaded = load_sweep(manifest)

        assert [s.lambda_nm for s in loaded] == [600.0, 650.0, 700.0]
        for a, b in zip(loaded, steps):
            assert np.array_equal(a.frame.data, b.frame.data)

    def test_missing_frame_found_before_loading(self, tmp_path):
        """Test that every frame path is checked up front."""
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("400.0, step_001.img, 1e-06, 0.01, 2.0\n")
        with pytest.raises(PathValidationError):
            read_sweep_manifest(manifest)

    def test_plain_step_lines(self, tmp_path):
        """Test header-free step lines with comments and blank lines."""
        for name in ("a.img", "b.img"):
            (tmp_path / name).write_bytes(b"")
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(
            "# lambda_nm, frame_path, flux_ref_w, exposure_ref_s, bandwidth_ref_nm\n"
            "400, a.img, 1e-6, 0.01, 2.0\n"
            "\n"
            "410, b.img, 2e-6, 0.02, 2.5  # second step\n"
        )

        df = read_sweep_manifest(manifest)

        assert df["lambda_nm"].tolist() == [400.0, 410.0]
        assert df["flux_ref_w"].tolist() == pytest.approx([1e-6, 2e-6], rel=1e-15)
        assert df["bandwidth_ref_nm"].tolist() == [2.0, 2.5]
        assert df["frame_path"].tolist() == [tmp_path / "a.img", tmp_path / "b.img"]

    def test_optional_header_line(self, tmp_path):
        """Test a first line naming the columns in another order."""
        (tmp_path / "a.img").write_bytes(b"")
        manifest = tmp_path / "manifest.csv"
        manifest.write_text(
            "lambda_nm,flux_ref_w,frame,exposure_ref_s,bandwidth_ref_nm\n"
            "400.0,1e-06,a.img,0.01,2.0\n"
        )
        df = read_sweep_manifest(manifest)
        assert df["flux_ref_w"].tolist() == pytest.approx([1e-6], rel=1e-15)
        assert df["frame_path"].tolist() == [tmp_path / "a.img"]

    def test_missing_column(self, tmp_path):
        """Test a header line without the flux column."""
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("lambda_nm,frame,exposure_ref_s,bandwidth_ref_nm\n400.0,a.img,0.01,2.0\n")
        with pytest.raises(MissingKeyError):
            read_sweep_manifest(manifest)

    def test_wrong_field_count(self, tmp_path):
        """Test a header-free line with four fields."""
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("# four fields\n400.0, a.img, 0.01, 2.0\n")
        with pytest.raises(ParseError) as excinfo:
            read_sweep_manifest(manifest)
        assert excinfo.value.line == 2

    def test_bad_value_names_line(self, tmp_path):
        """Test a non-positive flux after a comment line."""
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(
            "400.0, a.img, 1e-06, 0.01, 2.0\n"
            "# next step\n"
            "410.0, b.img, -1, 0.01, 2.0\n"
        )
        with pytest.raises(ParseError) as excinfo:
            read_sweep_manifest(manifest)
        assert excinfo.value.line == 3

    def test_roi_lines(self):
        """Test rectangle and polygon ROI lines."""
        rect = parse_roi_line(roi_tokens("hood, 10, 20, 14, 30"))
        poly = parse_roi_line(roi_tokens("door, poly, 30,5, 30,15, 40,10"))
        assert rect == Roi.rect("hood", 10, 20, 14, 30)
        assert poly.vertices == ((30, 5), (30, 15), (40, 10))
        assert format_roi_line(rect) == "hood, 10, 20, 14, 30"
        assert format_roi_line(poly) == "door, poly, 30,5, 30,15, 40,10"

    def test_rectangle_is_inclusive(self):
        """Test that both corners of a rectangle line are inside the ROI."""
        roi = parse_roi_line(roi_tokens("hood, 1, 2, 3, 4"))
        mask = roi.pixel_mask(5, 6)
        assert mask.sum() == 9
        assert mask[1, 2] and mask[3, 4]
        assert not mask[0, 2] and not mask[3, 5]

    @pytest.mark.parametrize(
        "line", ["hood", "hood, circle, 1, 2, 3", "hood, 1, 2, 3", "hood, a, b, c, d", "hood, 5, 5, 1, 1",
                 "hood, 1, 2, 3, 4, 5, 6", "door, poly, 1,1, 2,2", "door, poly, 1,1, 2"],
    )
    def test_bad_roi_lines(self, line):
        """Test structured errors for malformed ROI lines."""
        with pytest.raises(ParseError):
            parse_roi_line(roi_tokens(line))

    def test_roi_file(self, tmp_path):
        """Test ROI files and duplicate names."""
        rois = [Roi.rect("hood", 0, 0, 1, 1), Roi.polygon("door", [(0, 0), (0, 3), (3, 0)])]
        path = write_roi_file(tmp_path / "rois.txt", rois)
        assert read_roi_file(path) == rois
        path.write_text("# name, row0, col0, row1, col1\nhood, 0, 0, 1, 1\nhood, 2, 2, 3, 3\n")
        with pytest.raises(ParseError) as excinfo:
            read_roi_file(path)
        assert excinfo.value.line == 3

    def test_scene_file(self, tmp_path, grid):
        """Test palette and material grid parsing."""
        write_spectrum_file(
            tmp_path / "asphalt.txt",
            Spectrum(grid=grid, values=np.full(len(grid), 0.08), unit=SpectralUnit.REFLECTANCE),
        )
        write_spectrum_file(
            tmp_path / "red.txt",
            Spectrum(grid=grid, values=np.linspace(0.05, 0.6, len(grid)), unit=SpectralUnit.REFLECTANCE),
        )
        (tmp_path / "scene.txt").write_text(
            "4 3\n0 asphalt asphalt.txt\n1 red_paint red.txt\n0 0 0\n0 1 0\n0 1 0\n0 0 0\n"
        )
        scene = read_scene_file(tmp_path / "scene.txt")
        assert (scene.rows, scene.cols) == (4, 3)
        assert [m.name for m in scene.materials] == ["asphalt", "red_paint"]
        assert scene.material_map[:, 1].tolist() == [0, 1, 1, 0]

    def test_scene_unknown_index(self, tmp_path, grid):
        """Test a grid index without a palette entry."""
        write_spectrum_file(
            tmp_path / "asphalt.txt",
            Spectrum(grid=grid, values=np.full(len(grid), 0.08), unit=SpectralUnit.REFLECTANCE),
        )
        (tmp_path / "scene.txt").write_text("1 2\n0 asphalt asphalt.txt\n0 3\n")
        with pytest.raises(ParseError) as excinfo:
            read_scene_file(tmp_path / "scene.txt")
        assert excinfo.value.line == 3

    def test_metadata_file(self, tmp_path):
        """Test global and per-ROI metadata."""
        path = tmp_path / "meta.txt"
        path.write_text("make: Ford\ncolor: blue\nhood/color: red\n")
        metadata = read_metadata_file(path)
        assert metadata_for(metadata, "hood") == {"make": "Ford", "color": "red"}
        assert metadata_for(metadata, "door") == {"make": "Ford", "color": "blue"}

    def test_mask_round_trip(self, tmp_path):
        """Test mask files."""
        mask = np.array([[True, False, True], [False, True, True]])
        path = write_mask(tmp_path / "mask.txt", mask)
        assert np.array_equal(read_mask(path, 2, 3), mask)
        with pytest.raises(ParseError):
            read_mask(path, 3, 3)

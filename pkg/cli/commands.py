"""Subcommand implementations.

Each command validates every input path, echoes its run configuration into
the output directory, does its work, prints a table on stdout and returns
the exit code.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from core.config import Settings
from core.exceptions import InputValidationError, InsufficientStepsError
from core.logging import get_logger
from ingestion.envi import load_cube, save_cube
from ingestion.manifests import (
    load_sweep,
    metadata_for,
    read_mask,
    read_metadata_file,
    read_roi_file,
    read_scene_file,
    write_mask,
    write_sweep_manifest,
)
from ingestion.signatures import SIGNATURE_SUFFIX, export_library, load_library, read_signature_record
from ingestion.spectra import read_irradiance_log, read_spectrum_file, write_spectrum_file
from schemas.calibration import CalibrationConfig
from schemas.quality import QualityThresholds, RoiSummary
from schemas.run import RunConfig
from schemas.simulation import IlluminationScenario, NoiseModel
from schemas.spectral import IrradianceSeries, SensorModel, Spectrum, SpectralUnit, WavelengthGrid
from services.calibration import build_responsivity, irradiance_per_count, reference_from_steps
from services.forward_sim import builtin_scenarios, material_mean_spectra, render_scenarios, simulate_sweep
from services.library import SignatureLibrary, compare_spectra
from services.radcal import (
    dark_correct,
    dc_to_radiance,
    extract_signature,
    flat_field,
    match_irradiance,
    radiance_to_reflectance,
)
from services.roi_quality import RoiScreener
from services.spectral import resample

logger = get_logger(__name__)

CUBE_SUFFIX = ".img"


def _start(command: str, args, config: Settings, inputs: Dict[str, Optional[Path]]) -> RunConfig:
    run = RunConfig.from_settings(command, inputs, args.out, config, args.config)
    run.validate_paths()
    run.echo()
    return run


def _write_table(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def _print_table(df: pd.DataFrame):
    print(df.to_string(index=False))


def _sensor_for(grid: WavelengthGrid, config: Settings, dark_path: Optional[Path]) -> SensorModel:
    sensor = SensorModel.from_settings(config, grid=grid)
    if dark_path is not None:
        dark = read_spectrum_file(dark_path, default_unit=SpectralUnit.DIGITAL_COUNT).spectrum
        sensor = sensor.with_dark_frame(resample(dark, grid))
    return sensor


def _on_grid(spectrum: Spectrum, grid: WavelengthGrid) -> Spectrum:
    return spectrum if spectrum.grid.same_as(grid) else resample(spectrum, grid)


def _downwelling(series: IrradianceSeries, timestamp: Optional[float], grid: WavelengthGrid, config: Settings):
    if timestamp is None:
        if len(series) != 1:
            raise InputValidationError("--timestamp is required when the irradiance log has several samples")
        timestamp = series.samples[0].timestamp_s
    return _on_grid(match_irradiance(series, timestamp, config.irradiance_window_s), grid)


def cmd_calibrate(args, config: Settings) -> int:
    """Responsivity curve, irradiance per count and a per-step fit report."""
    _start("calibrate", args, config, {"sweep_manifest": args.sweep, "dark_frame": args.dark})
    steps = load_sweep(args.sweep)
    if len(steps) < 2:
        raise InsufficientStepsError(f"at least 2 sweep steps are required, got {len(steps)}")

    sensor = _sensor_for(steps[0].frame.grid, config, args.dark)
    curve = build_responsivity(steps, sensor, config.workers)
    reference = reference_from_steps(steps, sensor.grid)
    e_per_dc = irradiance_per_count(curve, reference, sensor, config.exposure_ratio_inverted)

    write_spectrum_file(args.out / "responsivity.txt", curve.relative, {"source": str(args.sweep)})
    write_spectrum_file(args.out / "e_per_dc.txt", e_per_dc, {"source": str(args.sweep)})
    report = pd.DataFrame(
        [
            {
                "lambda_nm": f.lambda_nm,
                "amplitude_dc": f.fit.amplitude_dc,
                "center_band": f.fit.center_band,
                "sigma_bands": f.fit.sigma_bands,
                "baseline_dc": f.fit.baseline_dc,
                "residual_rms": f.fit.residual_rms,
                "iterations": f.fit.iterations,
            }
            for f in curve.fits
        ]
    )
    _write_table(report, args.out / "fit_report.csv")
    _print_table(report)
    return 0


def cmd_convert(args, config: Settings) -> int:
    """Counts to reflectance, or to flat-fielded counts with --relative."""
    if args.relative:
        if args.responsivity is None:
            raise InputValidationError("--relative needs --responsivity")
        inputs = {"cube": args.cube, "responsivity": args.responsivity, "dark_frame": args.dark}
    else:
        if args.e_per_dc is None or args.irradiance is None:
            raise InputValidationError("convert needs --e-per-dc and --irradiance (or --relative)")
        inputs = {
            "cube": args.cube,
            "e_per_dc": args.e_per_dc,
            "irradiance_log": args.irradiance,
            "dark_frame": args.dark,
        }
    _start("convert", args, config, inputs)

    cube = load_cube(args.cube)
    sensor = _sensor_for(cube.grid, config, args.dark)
    corrected = dark_correct(cube, sensor.dark_frame, config.workers)

    if args.relative:
        responsivity = read_spectrum_file(args.responsivity, default_unit=SpectralUnit.RESPONSIVITY).spectrum
        flat = flat_field(corrected, _on_grid(responsivity, cube.grid), config.workers)
        outputs = {"flat_field": save_cube(flat, args.out / f"flat_field{CUBE_SUFFIX}")}
    else:
        e_per_dc = read_spectrum_file(args.e_per_dc, default_unit=SpectralUnit.IRRADIANCE).spectrum
        cfg = CalibrationConfig.from_settings(sensor, _on_grid(e_per_dc, cube.grid), config)
        radiance = dc_to_radiance(corrected, cfg, config.workers)
        downwelling = _downwelling(read_irradiance_log(args.irradiance), args.timestamp, cube.grid, config)
        reflectance = radiance_to_reflectance(radiance, downwelling, cfg, config.workers)
        outputs = {"reflectance": save_cube(reflectance, args.out / f"reflectance{CUBE_SUFFIX}")}
        write_spectrum_file(args.out / "downwelling.txt", downwelling)
        if args.keep_radiance:
            outputs["radiance"] = save_cube(radiance, args.out / f"radiance{CUBE_SUFFIX}")

    _print_table(pd.DataFrame([{"output": k, "header": str(v)} for k, v in outputs.items()]))
    return 0


def cmd_roi(args, config: Settings) -> int:
    """Per-ROI screening table, keep-mask and serialized summaries."""
    _start(
        "roi",
        args,
        config,
        {"cube": args.cube, "roi_file": args.rois, "irradiance_log": args.irradiance, "dc_cube": args.dc_cube},
    )
    cube = load_cube(args.cube)
    dc_cube = load_cube(args.dc_cube) if args.dc_cube is not None else None
    rois = read_roi_file(args.rois)
    downwelling = _downwelling(read_irradiance_log(args.irradiance), args.timestamp, cube.grid, config)
    sensor = SensorModel.from_settings(config, grid=cube.grid)
    screener = RoiScreener(QualityThresholds.from_settings(config))

    mask = np.ones((cube.rows, cube.cols), dtype=bool)
    rows, summaries = [], []
    for roi in rois:
        report = screener.score_roi(cube, roi, downwelling, sensor, dc_cube)
        flagged = report.pixels[[not f.clean for f in report.flags]]
        mask[flagged[:, 0], flagged[:, 1]] = False
        summary = report.summary()
        summaries.append(summary.model_dump(mode="json"))
        rows.append(
            {
                "roi": roi.name,
                "pixels": summary.total_pixels,
                "kept_fraction": summary.kept_fraction,
                **summary.flag_counts,
                "notes": "; ".join(summary.notes),
            }
        )

    table = pd.DataFrame(rows)
    _write_table(table, args.out / "roi_report.csv")
    write_mask(args.out / "mask.txt", mask)
    (args.out / "roi_summary.json").write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_table(table)
    return 0


def cmd_extract(args, config: Settings) -> int:
    """One signature record per ROI, exported as a library directory."""
    _start(
        "extract",
        args,
        config,
        {
            "cube": args.cube,
            "roi_file": args.rois,
            "mask": args.mask,
            "metadata": args.metadata,
            "roi_summary": args.summary,
        },
    )
    cube = load_cube(args.cube)
    rois = read_roi_file(args.rois)
    mask = read_mask(args.mask, cube.rows, cube.cols) if args.mask is not None else None
    metadata = read_metadata_file(args.metadata) if args.metadata is not None else {"": {}}
    summaries: Dict[str, RoiSummary] = {}
    if args.summary is not None:
        for entry in json.loads(args.summary.read_text(encoding="utf-8")):
            summary = RoiSummary.model_validate(entry)
            summaries[summary.roi_name] = summary

    cfg = CalibrationConfig.from_settings(SensorModel.from_settings(config, grid=cube.grid), None, config)
    records = []
    for roi in rois:
        record = extract_signature(cube, roi, mask, metadata_for(metadata, roi.name), cfg, args.timestamp)
        if roi.name in summaries:
            record = record.model_copy(update={"quality": summaries[roi.name]})
        records.append(record)

    paths = export_library(records, args.out / "library")
    _print_table(pd.DataFrame([{"name": r.name, "file": p.name} for r, p in zip(records, paths)]))
    return 0


def _scenarios(specs: List[str], grid: WavelengthGrid) -> List[IlluminationScenario]:
    if not specs:
        return builtin_scenarios(grid)
    scenarios = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise InputValidationError(f"scenario must be NAME=FILE, got {spec!r}")
        downwelling = read_spectrum_file(path, default_unit=SpectralUnit.IRRADIANCE).spectrum
        scenarios.append(IlluminationScenario(name=name, downwelling=_on_grid(downwelling, grid)))
    return scenarios


def cmd_simulate(args, config: Settings) -> int:
    """Radiance (and optional count) cubes per scenario plus material means."""
    inputs = {"scene": args.scene, "e_per_dc": args.e_per_dc, "quantum_efficiency": args.qe}
    for i, spec in enumerate(args.scenario):
        inputs[f"scenario_{i}"] = Path(spec.partition("=")[2]) if "=" in spec else None
    _start("simulate", args, config, inputs)
    if args.noise and (args.qe is None or args.e_per_dc is None):
        raise InputValidationError("--noise needs --qe and --e-per-dc")

    scene = read_scene_file(args.scene)
    grid = scene.grid
    cfg = None
    if args.e_per_dc is not None:
        e_per_dc = read_spectrum_file(args.e_per_dc, default_unit=SpectralUnit.IRRADIANCE).spectrum
        cfg = CalibrationConfig.from_settings(SensorModel.from_settings(config, grid=grid), _on_grid(e_per_dc, grid), config)
    noise = None
    if args.noise:
        qe = read_spectrum_file(args.qe, default_unit=SpectralUnit.RESPONSIVITY).spectrum
        noise = NoiseModel(
            enable_poisson=True,
            seed=config.seed,
            quantum_efficiency=_on_grid(qe, grid),
            normal_threshold=config.poisson_normal_threshold,
        )

    rendered = render_scenarios(scene, _scenarios(args.scenario, grid), cfg, noise, config.workers)
    rows = []
    for result in rendered:
        save_cube(result.radiance, args.out / f"{result.name}_radiance{CUBE_SUFFIX}")
        if result.counts is not None:
            save_cube(result.counts, args.out / f"{result.name}_counts{CUBE_SUFFIX}")
    for scenario, per_material in material_mean_spectra(scene, rendered).items():
        for material, spectrum in per_material.items():
            for wavelength, value in zip(spectrum.wavelengths_nm, spectrum.values):
                rows.append({"scenario": scenario, "material": material, "wavelength_nm": wavelength, "radiance": value})
    means = pd.DataFrame(rows, columns=["scenario", "material", "wavelength_nm", "radiance"])
    _write_table(means, args.out / "material_means.csv")

    summary = means.groupby(["scenario", "material"], sort=False)["radiance"].mean().reset_index()
    summary.columns = ["scenario", "material", "broadband_mean"]
    _print_table(summary)
    return 0


def _read_any_spectrum(path: Path) -> Spectrum:
    if path.suffix == SIGNATURE_SUFFIX:
        return read_signature_record(path).reflectance
    return read_spectrum_file(path).spectrum


def cmd_compare(args, config: Settings) -> int:
    """Spectral angle and RMSE on stdout, per-band table for plotting."""
    _start("compare", args, config, {"first": args.first, "second": args.second})
    metrics, table = compare_spectra(_read_any_spectrum(args.first), _read_any_spectrum(args.second))
    _write_table(table, args.out / "compare.csv")
    (args.out / "compare_metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_table(pd.DataFrame([metrics]))
    return 0


def cmd_match(args, config: Settings) -> int:
    """Library entries ranked by spectral angle to the query."""
    _start("match", args, config, {"query": args.query, "library": args.library})
    query = _read_any_spectrum(args.query)
    table = SignatureLibrary(load_library(args.library)).rank(query, args.top)
    _write_table(table, args.out / "match.csv")
    _print_table(table)
    return 0


def cmd_simulate_sweep(args, config: Settings) -> int:
    """Synthetic sweep frames plus a manifest `calibrate` can read."""
    _start("simulate-sweep", args, config, {"responsivity": args.responsivity})
    if args.step <= 0 or args.stop <= args.start:
        raise InputValidationError("sweep needs start < stop and a positive step")
    responsivity = read_spectrum_file(args.responsivity, default_unit=SpectralUnit.RESPONSIVITY).spectrum
    sensor = SensorModel.from_settings(config)
    count = int(round((args.stop - args.start) / args.step)) + 1
    wavelengths = args.start + args.step * np.arange(count)
    steps = simulate_sweep(
        sensor,
        responsivity,
        wavelengths,
        flux_ref_w=args.flux_ref,
        exposure_ref_s=args.exposure_ref,
        bandwidth_ref_nm=args.bandwidth_ref,
        peak_dc=args.peak_dc,
        sigma_bands=args.sigma_bands,
        cols=args.cols,
        read_noise_dc=args.noise_dc,
        seed=config.seed,
    )

    sweep_dir = args.out / "sweep"
    rows = []
    for number, step in enumerate(steps, start=1):
        frame_name = f"step_{number:03d}{CUBE_SUFFIX}"
        save_cube(step.frame, sweep_dir / frame_name)
        rows.append(
            {
                "lambda_nm": step.lambda_nm,
                "frame": frame_name,
                "flux_ref_w": step.flux_ref_w,
                "exposure_ref_s": step.exposure_ref_s,
                "bandwidth_ref_nm": step.bandwidth_ref_nm,
            }
        )
    manifest = write_sweep_manifest(sweep_dir / "manifest.csv", rows)
    _print_table(pd.DataFrame([{"steps": len(steps), "manifest": str(manifest)}]))
    return 0

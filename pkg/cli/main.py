"""Command-line entry point.

    python -m cli.main [--config FILE] [--seed N] [--out DIR] [--workers N] <command> ...

Exit codes: 0 success, 1 invalid input, 2 computation failure.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from cli import commands
from core.config import apply_settings, load_settings
from core.exceptions import HyperspecError
from core.logging import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_COMPUTATION = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperspec",
        description="Radiometric calibration, reflectance retrieval and signature tools for pushbroom cubes.",
    )
    parser.add_argument("--config", type=Path, help="KEY=value defaults file (see config/defaults.env)")
    parser.add_argument("--seed", type=int, help="Random seed for simulation noise")
    parser.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
    parser.add_argument("--workers", type=int, help="Worker threads for cube operations")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-format", choices=["console", "json"])
    parser.add_argument("--smoothing-width", type=int, help="Odd box-smoothing width for signatures")
    parser.add_argument("--incidence-cos", type=float, help="Cosine of the illumination incidence angle")
    parser.add_argument(
        "--clip-reflectance",
        action=argparse.BooleanOptionalAction,
        help="Clip reflectance into [0, clip-max] instead of failing",
    )
    parser.add_argument("--clip-max", type=float, help="Upper reflectance bound")
    parser.add_argument(
        "--eq6-as-printed",
        action=argparse.BooleanOptionalAction,
        help="Debug: reflectance = L*E/pi instead of pi*L/E",
    )
    parser.add_argument(
        "--exposure-ratio-inverted",
        action=argparse.BooleanOptionalAction,
        help="Debug: scale sweep counts by t_i/t_ref instead of t_ref/t_i",
    )
    parser.add_argument("--sat-frac", type=float, help="Saturation fraction of full scale")
    parser.add_argument("--glint-angle-max", type=float, help="Glint spectral-angle limit in radians")
    parser.add_argument("--glint-bright-ratio", type=float, help="Glint broadband brightness ratio")
    parser.add_argument("--shadow-ratio", type=float, help="Shadow broadband brightness ratio")
    parser.add_argument("--adj-angle-min", type=float, help="Adjacency spectral-angle limit in radians")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="Fit a monochromator sweep; write responsivity and E/DC")
    p.add_argument("--sweep", type=Path, required=True, help="Sweep manifest CSV")
    p.add_argument("--dark", type=Path, help="Dark frame spectrum file (digital counts)")
    p.set_defaults(func=commands.cmd_calibrate)

    p = sub.add_parser("convert", help="Digital counts to reflectance (or flat-fielded counts)")
    p.add_argument("--cube", type=Path, required=True, help="Raw cube (data file or .hdr)")
    p.add_argument("--e-per-dc", type=Path, help="Irradiance-per-count spectrum file")
    p.add_argument("--irradiance", type=Path, help="Irradiance log file or directory")
    p.add_argument("--timestamp", type=float, help="Acquisition time in seconds")
    p.add_argument("--dark", type=Path, help="Dark frame spectrum file")
    p.add_argument("--relative", action="store_true", help="Only divide by relative responsivity")
    p.add_argument("--responsivity", type=Path, help="Relative responsivity file (with --relative)")
    p.add_argument("--keep-radiance", action="store_true", help="Also write the radiance cube")
    p.set_defaults(func=commands.cmd_convert)

    p = sub.add_parser("roi", help="Screen ROIs for glint, saturation, shadow and adjacency")
    p.add_argument("--cube", type=Path, required=True, help="Radiance (or count) cube")
    p.add_argument("--rois", type=Path, required=True, help="ROI file")
    p.add_argument("--irradiance", type=Path, required=True, help="Irradiance log file or directory")
    p.add_argument("--timestamp", type=float, help="Acquisition time in seconds")
    p.add_argument("--dc-cube", type=Path, help="Raw counts for the saturation test")
    p.set_defaults(func=commands.cmd_roi)

    p = sub.add_parser("extract", help="Export ROI signatures from a reflectance cube")
    p.add_argument("--cube", type=Path, required=True, help="Reflectance cube")
    p.add_argument("--rois", type=Path, required=True, help="ROI file")
    p.add_argument("--mask", type=Path, help="Keep-mask written by `roi`")
    p.add_argument("--metadata", type=Path, help="key: value metadata file")
    p.add_argument("--summary", type=Path, help="roi_summary.json written by `roi`")
    p.add_argument("--timestamp", type=float, default=0.0, help="Acquisition time in seconds")
    p.set_defaults(func=commands.cmd_extract)

    p = sub.add_parser("simulate", help="Render a Lambertian scene under illumination scenarios")
    p.add_argument("--scene", type=Path, required=True, help="Scene file")
    p.add_argument(
        "--scenario",
        action="append",
        default=[],
        metavar="NAME=FILE",
        help="Downwelling spectrum per scenario; built-in noon/sunset/cloudy when omitted",
    )
    p.add_argument("--e-per-dc", type=Path, help="Irradiance-per-count file; enables count cubes")
    p.add_argument("--noise", action="store_true", help="Add seeded photon shot noise to counts")
    p.add_argument("--qe", type=Path, help="Quantum efficiency spectrum (required with --noise)")
    p.set_defaults(func=commands.cmd_simulate)

    p = sub.add_parser("compare", help="Spectral angle, RMSE and per-band differences of two spectra")
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)
    p.set_defaults(func=commands.cmd_compare)

    p = sub.add_parser("match", help="Rank library signatures against a query spectrum")
    p.add_argument("--query", type=Path, required=True)
    p.add_argument("--library", type=Path, required=True, help="Directory of .sig records")
    p.add_argument("--top", type=int, help="Keep the best N matches")
    p.set_defaults(func=commands.cmd_match)

    p = sub.add_parser("simulate-sweep", help="Write synthetic monochromator sweep frames and manifest")
    p.add_argument("--responsivity", type=Path, required=True, help="Known responsivity curve")
    p.add_argument("--start", type=float, default=400.0)
    p.add_argument("--stop", type=float, default=1000.0)
    p.add_argument("--step", type=float, default=10.0)
    p.add_argument("--peak-dc", type=float, default=2000.0)
    p.add_argument("--noise-dc", type=float, default=0.0, help="Read noise standard deviation")
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--sigma-bands", type=float, default=1.5)
    p.add_argument("--flux-ref", type=float, default=1e-6, help="Reference flux in W")
    p.add_argument("--exposure-ref", type=float, default=0.01, help="Reference exposure in s")
    p.add_argument("--bandwidth-ref", type=float, default=2.0, help="Reference bandwidth in nm")
    p.set_defaults(func=commands.cmd_simulate_sweep)

    return parser


def report_error(exc: Exception, exit_code: int):
    """One JSON object on stderr describing the failure."""
    if isinstance(exc, HyperspecError):
        payload = exc.as_dict()
    elif isinstance(exc, ValidationError):
        first = exc.errors()[0]
        payload = {
            "error": "ValidationError",
            "message": first["msg"],
            "field": ".".join(str(p) for p in first["loc"]),
        }
    else:
        payload = {"error": type(exc).__name__, "message": str(exc)}
    payload["exit_code"] = exit_code
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_settings(args.config)
        overrides = {
            "seed": args.seed,
            "workers": args.workers,
            "log_level": args.log_level,
            "log_format": args.log_format,
            "smoothing_width": args.smoothing_width,
            "incidence_cos": args.incidence_cos,
            "clip_reflectance": args.clip_reflectance,
            "clip_max": args.clip_max,
            "eq6_as_printed": args.eq6_as_printed,
            "exposure_ratio_inverted": args.exposure_ratio_inverted,
            "sat_frac": args.sat_frac,
            "glint_angle_max": args.glint_angle_max,
            "glint_bright_ratio": args.glint_bright_ratio,
            "shadow_ratio": args.shadow_ratio,
            "adj_angle_min": args.adj_angle_min,
        }
        config = config.model_copy(update={k: v for k, v in overrides.items() if v is not None})
        apply_settings(config)
        setup_logging(config.log_level, config.log_format)
        logger.info("Starting command", command=args.command, out=str(args.out))
        return args.func(args, config)
    except HyperspecError as exc:
        logger.error("Command failed", command=args.command, **exc.as_dict())
        report_error(exc, exc.exit_code)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("Command failed", command=args.command, error="ValidationError", message=str(exc))
        report_error(exc, EXIT_INPUT)
        return EXIT_INPUT
    except Exception as exc:
        logger.exception("Unexpected failure", command=args.command)
        report_error(exc, EXIT_COMPUTATION)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())

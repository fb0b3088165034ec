"""Command-line entry point.

Subcommands::

    polarmellin pmt IN OUT          PMT of one image (PGM or F32 in, .pgm/.f32 out)
    polarmellin bench               run the staggered pipeline, print the timing JSON
    polarmellin match REF QUERY     recover scale, rotation and shift between two images
    polarmellin gen SHAPE OUT       write a synthetic test image
    polarmellin map-dump OUT        write the remap table in LPTM format

Exit codes: 0 on success (or a confident match), 2 when ``match`` finds no
confident match, 1 on any error. ``bench`` also returns 1 when the
deadline-miss rate is above ``--miss-threshold``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import NoMatchError, PmtError, SourceExhaustedError
from .ft_engine import MAGNITUDE, SPECTRUM_KINDS
from .imageio import read_grid, to_uint8, write_f32, write_pgm
from .lpt import INSCRIBED, R_MAX_MODES, PmtParams, cached_map, default_workers, write_map_dump
from .pipeline import CHANNEL_ORDERS, PipelineConfig, Scenario, run_pipeline
from .shapes import SHAPES, render_shape
from .ssri_match import match_images, pmt

log = logging.getLogger("polarmellin")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_MATCH = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 means "no match" here.
    Abbreviated flags are refused so a typo never lands on a real option."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_geometry(p: argparse.ArgumentParser, with_input_size: bool) -> None:
    g = p.add_argument_group("transform geometry")
    if with_input_size:
        g.add_argument("--width", type=_positive_int, default=1920, help="input (FT plane) width")
        g.add_argument("--height", type=_positive_int, default=1080, help="input (FT plane) height")
    g.add_argument("--rho-size", type=_positive_int, default=1920, help="output columns (log-radius)")
    g.add_argument("--theta-size", type=_positive_int, default=1080, help="output rows (angle)")
    g.add_argument("--r0", type=float, default=1.0, help="radius of output column 0")
    g.add_argument("--rdc", type=float, default=4.0, help="DC-block radius in pixels")
    g.add_argument("--rmax", choices=R_MAX_MODES, default=INSCRIBED, help="outer radius policy")
    g.add_argument("--kind", choices=SPECTRUM_KINDS, default=MAGNITUDE, help="spectrum fed to the LPT")


def _params(args, width: int | None = None, height: int | None = None) -> PmtParams:
    return PmtParams(
        in_width=width if width is not None else args.width,
        in_height=height if height is not None else args.height,
        rho_size=args.rho_size,
        theta_size=args.theta_size,
        r0=args.r0,
        r_dc=args.rdc,
        r_max_mode=args.rmax,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polarmellin", description="Polar Mellin transform pre-processor.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pmt", help="PMT of a single image")
    p.add_argument("input", type=Path, help="PGM (P5) or F32 grid")
    p.add_argument("output", type=Path, help=".pgm (8-bit, max-normalized) or .f32")
    p.add_argument("--workers", type=_positive_int, default=default_workers())
    _add_geometry(p, with_input_size=False)
    p.set_defaults(func=cmd_pmt)

    p = sub.add_parser("bench", help="run the staggered pipeline and report timings")
    _add_geometry(p, with_input_size=True)
    p.add_argument("--frames", type=int, default=10_000, help="mono frames to push through")
    p.add_argument("--rgb-fps", type=float, default=166.0, help="display rate of packed RGB frames")
    p.add_argument("--capture-latency-us", type=float, default=701.0, help="simulated readout time")
    p.add_argument("--channel-order", choices=CHANNEL_ORDERS, default="rgb")
    p.add_argument("--workers", type=_positive_int, default=default_workers(), help="LPT threads")
    p.add_argument("--miss-threshold", type=float, default=0.01, help="max tolerated deadline-miss rate")
    p.add_argument("--source-dir", type=Path, help="replay PGM/F32 images from here instead of shapes")
    p.add_argument("--dump-dir", type=Path, help="write the first packed RGB frames here as PPM")
    p.add_argument("--dump-limit", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("match", help="scale, rotation and shift between two images")
    p.add_argument("reference", type=Path)
    p.add_argument("query", type=Path)
    p.add_argument("--min-confidence", type=float, default=0.5, help="below this the pair is a no-match")
    p.add_argument("--no-shift", action="store_true", help="skip translation recovery")
    p.add_argument("--workers", type=_positive_int, default=default_workers())
    _add_geometry(p, with_input_size=False)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("gen", help="write a synthetic test image")
    p.add_argument("shape", help=f"one of: {', '.join(SHAPES)}")
    p.add_argument("output", type=Path, help="PGM path")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--rotation", type=float, default=0.0, help="degrees, clockwise on screen")
    p.add_argument("--size", type=int, default=512, help="square image side, >= 32")
    p.add_argument("--shift", type=float, nargs=2, default=(0.0, 0.0), metavar=("DX", "DY"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("map-dump", help="write the remap table (LPTM format)")
    p.add_argument("output", type=Path)
    _add_geometry(p, with_input_size=True)
    p.set_defaults(func=cmd_map_dump)
    return parser


def cmd_pmt(args) -> int:
    image = read_grid(args.input)
    params = _params(args, image.shape[1], image.shape[0])
    out = pmt(image, params, args.kind, workers=args.workers)
    if args.output.suffix.lower() == ".f32":
        write_f32(args.output, out)
    else:
        write_pgm(args.output, to_uint8(out))
    log.info("wrote %s (%dx%d)", args.output, out.shape[1], out.shape[0])
    return EXIT_OK


def cmd_bench(args) -> int:
    params = _params(args)
    scenario = Scenario(
        kind="directory" if args.source_dir else "generator",
        directory=str(args.source_dir) if args.source_dir else None,
        width=params.in_width,
        height=params.in_height,
        spectrum_kind=args.kind,
        dc_block_radius=params.r_dc,
        loop=args.source_dir is None,
    )
    config = PipelineConfig(
        frames=args.frames,
        capture_latency=args.capture_latency_us * 1e-6,
        rgb_fps=args.rgb_fps,
        channel_order=args.channel_order,
        workers=args.workers,
        scenario=scenario,
        dump_dir=str(args.dump_dir) if args.dump_dir else None,
        dump_limit=args.dump_limit,
    )
    try:
        report = run_pipeline(config, params)
    except SourceExhaustedError as exc:
        if exc.report is not None:
            print(exc.report.to_json(indent=2))
        raise
    print(report.to_json(indent=2))
    if report.miss_rate > args.miss_threshold:
        print(f"deadline-miss rate {report.miss_rate:.4f} exceeds {args.miss_threshold:g}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_match(args) -> int:
    ref = read_grid(args.reference)
    query = read_grid(args.query)
    if ref.shape != query.shape:
        print(
            f"error: {args.reference} is {ref.shape[1]}x{ref.shape[0]} but "
            f"{args.query} is {query.shape[1]}x{query.shape[0]}",
            file=sys.stderr,
        )
        return EXIT_ERROR
    params = _params(args, ref.shape[1], ref.shape[0])
    try:
        result = match_images(ref, query, params, args.kind, locate_shift=not args.no_shift, workers=args.workers)
    except NoMatchError as exc:
        print(f"no match: {exc}", file=sys.stderr)
        return EXIT_NO_MATCH
    print(result.to_json())
    return EXIT_OK if result.confidence >= args.min_confidence else EXIT_NO_MATCH


def cmd_gen(args) -> int:
    if args.size < 32:
        raise PmtError(f"--size must be >= 32, got {args.size}")
    image = render_shape(args.shape, args.scale, args.rotation, args.size, shift=tuple(args.shift))
    write_pgm(args.output, image)
    return EXIT_OK


def cmd_map_dump(args) -> int:
    table = cached_map(_params(args))
    write_map_dump(table, args.output)
    log.info("wrote %s (%d valid entries)", args.output, table.valid_count)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (PmtError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

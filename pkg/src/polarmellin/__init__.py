"""Polar Mellin transform pre-processor.

Centered Fourier magnitude, then a precomputed log-polar remap, so that
translation drops out and scale and rotation become plain shifts; plus a
staggered capture/transform/display pipeline and a matcher that reads the
shifts back out.
"""

__version__ = "0.1.0"

from .errors import (
    FormatError,
    InvalidInputError,
    InvalidParamsError,
    InvalidScaleError,
    NoMatchError,
    PmtError,
    SourceError,
    SourceExhaustedError,
)
from .ft_engine import dft2_centered, quantize8, spectrum, spectrum_frame
from .lpt import PmtParams, RemapTable, apply_lpt, build_map, cached_map, direct_lpt, read_map_dump, write_map_dump
from .pipeline import Frame, PipelineConfig, Scenario, TimingReport, pack_rgb, run_pipeline, synthetic_source, unpack_rgb
from .shapes import SHAPES, render_shape
from .ssri_match import (
    CorrelationSurface,
    MatchResult,
    condition,
    correlate,
    match_images,
    peak_to_scale_rotation,
    pmt,
    register_and_locate,
)

__all__ = [
    "CorrelationSurface",
    "FormatError",
    "Frame",
    "InvalidInputError",
    "InvalidParamsError",
    "InvalidScaleError",
    "MatchResult",
    "NoMatchError",
    "PipelineConfig",
    "PmtError",
    "PmtParams",
    "RemapTable",
    "SHAPES",
    "Scenario",
    "SourceError",
    "SourceExhaustedError",
    "TimingReport",
    "apply_lpt",
    "build_map",
    "cached_map",
    "condition",
    "correlate",
    "dft2_centered",
    "direct_lpt",
    "match_images",
    "pack_rgb",
    "peak_to_scale_rotation",
    "pmt",
    "quantize8",
    "read_map_dump",
    "register_and_locate",
    "render_shape",
    "run_pipeline",
    "spectrum",
    "spectrum_frame",
    "synthetic_source",
    "unpack_rgb",
    "write_map_dump",
]

"""Ultrasound landmark tracking with a long/short diffeomorphic motion prior."""

from .deform import (
    compose,
    identity_displacement,
    integrate_svf,
    jacobian_determinant,
    warp_image,
)
from .emma import EmmaConfig, emma_align
from .fields import bilinear_sample, build_pyramid, gaussian_smooth
from .metrics import EvalSummary, evaluate, note, summarize, te
from .motion import (
    LongShortMotion,
    MotionConfig,
    estimate_long_short,
    estimate_pair,
    sample_delta_t,
)
from .tracker import TrackerConfig, Tracklet, correlate, track_sequence

__all__ = [
    "EmmaConfig",
    "EvalSummary",
    "LongShortMotion",
    "MotionConfig",
    "TrackerConfig",
    "Tracklet",
    "bilinear_sample",
    "build_pyramid",
    "compose",
    "correlate",
    "emma_align",
    "estimate_long_short",
    "estimate_pair",
    "evaluate",
    "gaussian_smooth",
    "identity_displacement",
    "integrate_svf",
    "jacobian_determinant",
    "note",
    "sample_delta_t",
    "summarize",
    "te",
    "track_sequence",
    "warp_image",
]

__version__ = "0.1.0"

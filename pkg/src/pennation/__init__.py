"""Pennation angle estimation in B-mode ultrasound videos of muscle.

Per frame, the region between the two aponeuroses is located, optionally
enhanced with a vesselness or Radon filter, and the dominant fascicle
orientation is estimated with a projection-profile, co-occurrence, Radon or
vesselness estimator. Subregion estimates are LOESS-smoothed over time.
"""
from .errors import (
    DegenerateInputError,
    FrameMismatchError,
    InsufficientDataError,
    ParameterError,
    PennationError,
    SegmentationError,
)
from .estimators import (
    ANGLE_GRID,
    COMBINATIONS,
    AngleEstimate,
    estimate,
    estimate_frangi,
    estimate_glcm,
    estimate_projection,
    estimate_radon,
)
from .evaluation import AnnotationSet, EvalReport, evaluate_run, icc3
from .roi import RoiResult, compute_roi, select_best_subregions
from .smoothing import LoessConfig, loess_fit, loess_weight, smooth_pipeline
from .synth import SynthSpec, generate_frame, generate_video

__version__ = "0.1.0"

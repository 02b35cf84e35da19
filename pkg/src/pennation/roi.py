"""Region of interest between the two aponeuroses.

Per frame: trim the black device borders, segment the aponeuroses with a
vesselness filter and Otsu threshold, fit straight lines to the facing
borders of the two largest segments, and cut the strip between them (minus
10-pixel safety margins) into eight half-overlapping subregions whose image
quality is scored for later selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError, SegmentationError
from .imaging import (
    LineFit,
    as_image,
    binarize,
    connected_components,
    fit_line_least_squares,
    otsu_threshold,
    rescale_to_byte_range,
    sobel_gradients,
)
from .transforms import APONEUROSIS_SCALES, frangi_vesselness

MARGIN = 10
MIN_GAP = 40
N_SUBREGIONS = 8
HIST_BINS = 64
BLACK_LEVEL = 2.0
MIN_SEGMENT_FRACTION = 0.005

CRITERIA = ("variance", "mean_gradient", "gradient_hist_max")
CRITERION_ALIASES = {
    "variance": "variance",
    "mean_gradient": "mean_gradient",
    "mean-gradient": "mean_gradient",
    "gradient_hist_max": "gradient_hist_max",
    "hist-max": "gradient_hist_max",
    "hist_max": "gradient_hist_max",
}


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def slices(self, dx: int = 0, dy: int = 0):
        return slice(self.y0 - dy, self.y1 - dy), slice(self.x0 - dx, self.x1 - dx)

    def cut(self, frame: np.ndarray) -> np.ndarray:
        return frame[self.y0:self.y1, self.x0:self.x1]

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class SubregionQuality:
    variance: float
    mean_gradient: float
    gradient_hist_max: int

    def value(self, criterion: str) -> float:
        return float(getattr(self, CRITERION_ALIASES[criterion]))


@dataclass(frozen=True)
class PennationContext:
    deep_apo_angle: float

    def __post_init__(self):
        if not abs(self.deep_apo_angle) < 45.0:
            raise ParameterError(f"deep aponeurosis angle {self.deep_apo_angle} is not near-horizontal")


@dataclass(frozen=True)
class RoiResult:
    """ROI geometry in frame coordinates.

    ``upper_apo`` is the lower border of the superficial aponeurosis,
    ``lower_apo`` the upper border of the deep one.
    """

    upper_apo: LineFit
    lower_apo: LineFit
    crop: Rect
    subregions: list[Rect]
    quality: list[SubregionQuality]
    offset: tuple[int, int] = (0, 0)

    @property
    def deep_apo_angle(self) -> float:
        return self.lower_apo.angle_deg

    def context(self) -> PennationContext:
        return PennationContext(self.deep_apo_angle)

    def to_dict(self) -> dict:
        return {
            "offset": list(self.offset),
            "crop": self.crop.as_list(),
            "upper_apo": self.upper_apo.to_dict(),
            "lower_apo": self.lower_apo.to_dict(),
            "subregions": [
                {"rect": r.as_list(), "variance": q.variance, "mean_gradient": q.mean_gradient,
                 "gradient_hist_max": q.gradient_hist_max}
                for r, q in zip(self.subregions, self.quality)
            ],
        }


def remove_black_borders(frame: np.ndarray, level: float = BLACK_LEVEL):
    """Trim outer rows/columns whose mean gray is below ``level``.

    Returns the trimmed image and its ``(x, y)`` offset in the frame.
    """
    frame = as_image(frame)
    top, bottom, left, right = 0, frame.shape[0], 0, frame.shape[1]
    changed = True
    while changed:
        changed = False
        region = frame[top:bottom, left:right]
        col_mean = region.mean(axis=0)
        bright = np.flatnonzero(col_mean >= level)
        if bright.size == 0:
            raise DegenerateInputError("frame is entirely black")
        if bright[0] > 0 or bright[-1] < region.shape[1] - 1:
            left, right = left + int(bright[0]), left + int(bright[-1]) + 1
            changed = True
            region = frame[top:bottom, left:right]
        row_mean = region.mean(axis=1)
        bright = np.flatnonzero(row_mean >= level)
        if bright.size == 0:
            raise DegenerateInputError("frame is entirely black")
        if bright[0] > 0 or bright[-1] < region.shape[0] - 1:
            top, bottom = top + int(bright[0]), top + int(bright[-1]) + 1
            changed = True
    return frame[top:bottom, left:right], (left, top)


def _border_points(rows: np.ndarray, cols: np.ndarray, lowest: bool) -> np.ndarray:
    """Per-column extremal pixel of a segment as ``(x, y)`` points."""
    ucols, inv = np.unique(cols, return_inverse=True)
    if lowest:
        ext = np.full(ucols.size, -1, dtype=np.int64)
        np.maximum.at(ext, inv, rows)
    else:
        ext = np.full(ucols.size, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(ext, inv, rows)
    return np.column_stack([ucols, ext]).astype(np.float64)


def detect_aponeuroses(frame: np.ndarray, scales=APONEUROSIS_SCALES) -> tuple[LineFit, LineFit]:
    """Fit lines to the lower border of the superficial and the upper border of the deep aponeurosis."""
    frame = as_image(frame)
    response = frangi_vesselness(frame, scales, angular_window=None).response
    scaled = rescale_to_byte_range(response)
    try:
        threshold = otsu_threshold(scaled)
    except DegenerateInputError as exc:
        raise SegmentationError("no aponeurosis structure found") from exc
    comps = connected_components(binarize(scaled, threshold))
    min_area = MIN_SEGMENT_FRACTION * frame.size
    comps = [c for c in comps if c.area >= min_area]
    if len(comps) < 2:
        raise SegmentationError(f"found {len(comps)} segment(s) of at least {min_area:.0f} pixels, need 2")
    upper, lower = sorted(comps[:2], key=lambda c: c.mean_row)
    try:
        up = fit_line_least_squares(_border_points(upper.rows, upper.cols, lowest=True))
        lo = fit_line_least_squares(_border_points(lower.rows, lower.cols, lowest=False))
    except DegenerateInputError as exc:
        raise SegmentationError("aponeurosis segment is not horizontal enough to fit") from exc
    return up, lo


def subregion_bounds(width: int, n: int = N_SUBREGIONS) -> list[tuple[int, int]]:
    """``n`` half-overlapping spans of width ``2W/(n+1)`` at stride ``W/(n+1)``, rounded."""
    parts = n + 1
    edge = [(2 * i * width + parts) // (2 * parts) for i in range(parts + 1)]
    return [(edge[i], edge[i + 2]) for i in range(n)]


def build_roi(frame: np.ndarray, upper: LineFit, lower: LineFit,
              offset: tuple[int, int] = (0, 0), margin: int = MARGIN, min_gap: int = MIN_GAP) -> RoiResult:
    """Crop between the aponeurosis lines and score its eight subregions.

    ``frame`` is the (border-trimmed) image the lines were fitted in; every
    output coordinate is shifted by ``offset`` into the original frame.
    """
    frame = as_image(frame)
    h, w = frame.shape
    xs = np.arange(w)
    top = math.ceil(float(np.max(upper.y_at(xs))) - 1e-9) + margin
    bottom = math.floor(float(np.min(lower.y_at(xs))) + 1e-9) - margin
    if bottom - top + 1 < min_gap:
        raise DegenerateInputError(
            f"aponeuroses too close: {bottom - top + 1} rows between margins, need {min_gap}")
    if top < 1 or bottom > h - 2 or w - 2 * margin < N_SUBREGIONS + 1:
        raise DegenerateInputError("region of interest does not fit inside the frame")
    local = Rect(margin, top, w - margin, bottom + 1)

    grad = sobel_gradients(frame).magnitude
    crop_grad = local.cut(grad)
    gmax = float(crop_grad.max())
    ox, oy = offset
    subregions, quality = [], []
    for a, b in subregion_bounds(local.width):
        r = Rect(local.x0 + a, local.y0, local.x0 + b, local.y1)
        pix = r.cut(frame)
        g = r.cut(grad)
        if gmax > 0:
            counts, _ = np.histogram(g, bins=HIST_BINS, range=(0.0, gmax))
            hmax = int(counts.max())
        else:
            hmax = int(g.size)
        quality.append(SubregionQuality(float(pix.var()), float(g.mean()), hmax))
        subregions.append(Rect(r.x0 + ox, r.y0 + oy, r.x1 + ox, r.y1 + oy))
    crop = Rect(local.x0 + ox, local.y0 + oy, local.x1 + ox, local.y1 + oy)
    return RoiResult(
        upper_apo=upper.shifted(ox, oy),
        lower_apo=lower.shifted(ox, oy),
        crop=crop,
        subregions=subregions,
        quality=quality,
        offset=(ox, oy),
    )


def compute_roi(frame: np.ndarray) -> RoiResult:
    """Full per-frame ROI pipeline on a raw frame."""
    trimmed, offset = remove_black_borders(frame)
    upper, lower = detect_aponeuroses(trimmed)
    return build_roi(trimmed, upper, lower, offset)


def select_best_subregions(roi: RoiResult, n: int = 3, criterion: str = "mean_gradient") -> list[int]:
    """Indices of the ``n`` subregions with the largest criterion value, best first."""
    if not 1 <= n <= len(roi.quality):
        raise ParameterError(f"n must be between 1 and {len(roi.quality)}")
    if criterion not in CRITERION_ALIASES:
        raise ParameterError(f"unknown criterion {criterion!r}; choose one of {CRITERIA}")
    values = [q.value(criterion) for q in roi.quality]
    return sorted(range(len(values)), key=lambda i: (-values[i], i))[:n]

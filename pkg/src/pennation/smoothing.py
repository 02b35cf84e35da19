"""LOESS smoothing of per-frame, per-subregion angle estimates.

The predictor is the frame number, so the three subregion estimates of one
frame share the same abscissa and enter a neighborhood together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, ParameterError


@dataclass(frozen=True)
class LoessConfig:
    k: int = 27
    degree: int = 1
    frame_halfwidth: int = 4

    def __post_init__(self):
        if self.degree < 0:
            raise ParameterError("degree must be non-negative")
        if self.k < self.degree + 2:
            raise ParameterError(f"k={self.k} is too small for a degree-{self.degree} fit")
        if self.frame_halfwidth < 0:
            raise ParameterError("frame_halfwidth must be non-negative")


@dataclass
class AngleSeries:
    frames: np.ndarray
    angles: np.ndarray
    subregions: np.ndarray
    fitted: dict[int, float] = field(default_factory=dict)
    support: dict[int, int] = field(default_factory=dict)  # positively weighted points per fit

    @classmethod
    def from_points(cls, points: Iterable[tuple[int, float, int]]) -> "AngleSeries":
        pts = list(points)
        if not pts:
            return cls(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))
        f, a, s = zip(*pts)
        return cls(np.asarray(f, dtype=np.int64), np.asarray(a, dtype=np.float64), np.asarray(s, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.frames.size)


def loess_weight(z, h):
    """Tricube weight ``(1 - (|z|/h)^3)^3`` for ``|z| < h``, else 0."""
    if not h > 0:
        raise ParameterError(f"bandwidth h must be positive, got {h}")
    u = np.abs(np.asarray(z, dtype=np.float64)) / h
    w = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
    return float(w) if w.ndim == 0 else w


def _local_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray, degree: int) -> float:
    """Weighted polynomial fit in centered abscissa ``x``; value at ``x = 0``."""
    pos = w > 0
    degree = min(degree, np.unique(x[pos]).size - 1)
    if degree <= 0:
        return float(np.sum(w * y) / np.sum(w))
    sw = np.sqrt(w)
    design = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    return float(coef[0])


def loess_fit(series: AngleSeries, cfg: LoessConfig = LoessConfig(),
              at_frames: Optional[Sequence[int]] = None) -> AngleSeries:
    """Distance-weighted local polynomial fit over the ``k`` nearest points.

    ``h`` is the distance of the k-th nearest point (ties resolved by
    subregion index), so the farthest selected points get zero weight.
    """
    n = len(series)
    if n < cfg.k:
        raise InsufficientDataError(f"LOESS needs at least k={cfg.k} points, got {n}")
    targets = np.unique(series.frames) if at_frames is None else np.asarray(at_frames, dtype=np.int64)
    fitted, support = {}, {}
    for t in targets:
        dist = np.abs(series.frames - t).astype(np.float64)
        order = np.lexsort((series.frames, series.subregions, dist))[:cfg.k]
        d = dist[order]
        h = d[-1]
        w = loess_weight(d, h) if h > 0 else np.ones_like(d)
        fitted[int(t)] = _local_fit(series.frames[order] - float(t), series.angles[order], w, cfg.degree)
        support[int(t)] = int(np.count_nonzero(w))
    return AngleSeries(series.frames, series.angles, series.subregions, fitted, support)


@dataclass(frozen=True)
class FrameAngle:
    frame: int
    fitted_angle_deg: Optional[float]
    n_points: int
    quality_warning: bool


def smooth_pipeline(
    raw: Mapping[int, Sequence],
    deep_apo_angles: Mapping[int, float],
    frames: Sequence[int],
    cfg: LoessConfig = LoessConfig(),
) -> list[FrameAngle]:
    """LOESS-smoothed pennation angle for every frame in ``frames``.

    ``raw[frame]`` holds that frame's selected subregion estimates
    (:class:`~pennation.estimators.AngleEstimate` with ``subregion`` set);
    ``deep_apo_angles[frame]`` converts fascicle angles to pennation angles.
    Degenerate estimates are dropped before fitting. A frame is flagged when
    more than half of the raw estimates within ``frame_halfwidth`` frames are
    degenerate, or when the frame has no estimates of its own.
    """
    points, n_raw, n_bad = [], {}, {}
    for f in frames:
        ests = list(raw.get(f, ()))
        n_raw[f] = len(ests)
        n_bad[f] = sum(e.degenerate for e in ests)
        for e in ests:
            if not e.degenerate:
                points.append((f, e.angle_deg - deep_apo_angles[f], int(e.subregion)))
    series = AngleSeries.from_points(points)
    try:
        fit = loess_fit(series, cfg, at_frames=frames)
    except InsufficientDataError:
        fit = None
    out = []
    hw = cfg.frame_halfwidth
    for f in frames:
        window = [g for g in frames if abs(g - f) <= hw]
        total = sum(n_raw[g] for g in window)
        bad = sum(n_bad[g] for g in window)
        warn = fit is None or n_raw[f] == 0 or (total > 0 and bad > 0.5 * total)
        if fit is None:
            out.append(FrameAngle(int(f), None, 0, True))
        else:
            out.append(FrameAngle(int(f), fit.fitted[int(f)], fit.support[int(f)], warn))
    return out

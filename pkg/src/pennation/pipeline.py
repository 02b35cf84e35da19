"""Per-frame orchestration shared by the CLI commands.

Each frame is processed once: the ROI is located, every requested
pre-processing is applied to the whole crop, and the estimators run on the
entire crop and/or on the best subregions cut from the pre-processed crop.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import PennationError
from .estimators import AngleEstimate, COMBINATIONS, check_combination, estimate_prepared, prepare
from .imaging import as_image, read_image
from .roi import N_SUBREGIONS, RoiResult, compute_roi, select_best_subregions
from .smoothing import FrameAngle, LoessConfig, smooth_pipeline

log = logging.getLogger(__name__)

REGION_MODES = ("entire", "subregions")


@dataclass
class FrameResult:
    index: int
    roi: Optional[RoiResult] = None
    error: Optional[str] = None
    selected: list[int] = field(default_factory=list)
    estimates: dict[tuple[str, str], list[AngleEstimate]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.roi is not None


@dataclass(frozen=True)
class FrameJob:
    combos: tuple[tuple[str, str], ...] = COMBINATIONS
    region_modes: tuple[str, ...] = REGION_MODES
    criterion: str = "mean_gradient"
    n_best: int = 3
    all_subregions: bool = False


def process_frame(index: int, frame: np.ndarray, job: FrameJob) -> FrameResult:
    result = FrameResult(index=index)
    try:
        roi = compute_roi(as_image(frame))
    except PennationError as exc:
        result.error = str(exc)
        return result
    result.roi = roi
    crop = roi.crop.cut(frame)
    if "subregions" in job.region_modes:
        result.selected = (list(range(N_SUBREGIONS)) if job.all_subregions
                           else select_best_subregions(roi, job.n_best, job.criterion))
    prepared: dict[str, np.ndarray] = {}
    for method, preproc in job.combos:
        check_combination(method, preproc)
        key = "raw" if method == preproc else preproc
        if key not in prepared:
            prepared[key] = prepare(crop, method, preproc)
        img = prepared[key]
        ests = []
        if "entire" in job.region_modes:
            ests.append(_safe_estimate(img, method, preproc).at(index, "entire"))
        for s in result.selected:
            sub = roi.subregions[s]
            rows, cols = sub.slices(roi.crop.x0, roi.crop.y0)
            ests.append(_safe_estimate(img[rows, cols], method, preproc).at(index, s))
        result.estimates[(method, preproc)] = ests
    return result


def _safe_estimate(img: np.ndarray, method: str, preproc: str) -> AngleEstimate:
    try:
        return estimate_prepared(img, method, preproc)
    except PennationError as exc:
        log.warning("%s+%s failed on a %dx%d region: %s", method, preproc, img.shape[1], img.shape[0], exc)
        return AngleEstimate(angle_deg=15.0, method=method, preproc=preproc, degenerate=True)


def _load_and_process(args):
    index, path, job = args
    return process_frame(index, read_image(path), job)


def process_frames(frames: Sequence, job: FrameJob, jobs: int = 1) -> list[FrameResult]:
    """Process frames (arrays or file paths) in order; ``jobs > 1`` uses worker processes."""
    tasks = [(i, f, job) for i, f in enumerate(frames)]
    if jobs <= 1:
        return [process_frame(i, f, job) if isinstance(f, np.ndarray) else _load_and_process((i, f, job))
                for i, f, job in tasks]
    if any(isinstance(f, np.ndarray) for f in frames):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_process_task, tasks))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_load_and_process, tasks))


def _process_task(args):
    index, frame, job = args
    return process_frame(index, frame, job)


def frame_angles(results: Sequence[FrameResult], combo: tuple[str, str], region_mode: str,
                 loess: Optional[LoessConfig] = LoessConfig()) -> list[FrameAngle]:
    """Per-frame pennation angles for one combination and region mode.

    ``entire`` reports the raw whole-ROI estimate of each frame; ``subregions``
    LOESS-smooths the selected subregion estimates (or, without ``loess``,
    averages the non-degenerate ones per frame).
    """
    frames = [r.index for r in results]
    apo = {r.index: r.roi.deep_apo_angle for r in results if r.ok}
    if region_mode == "entire":
        out = []
        for r in results:
            ests = [e for e in r.estimates.get(combo, []) if e.subregion == "entire"]
            if not r.ok or not ests:
                out.append(FrameAngle(r.index, None, 0, True))
                continue
            e = ests[0]
            out.append(FrameAngle(r.index, e.angle_deg - apo[r.index], 1, e.degenerate))
        return out
    if region_mode != "subregions":
        raise ValueError(f"unknown region mode {region_mode!r}")
    raw = {r.index: [e for e in r.estimates.get(combo, []) if e.subregion != "entire"]
           for r in results if r.ok}
    if loess is not None:
        fitted = {a.frame: a for a in smooth_pipeline(raw, apo, sorted(raw), loess)} if raw else {}
        return [fitted.get(f, FrameAngle(f, None, 0, True)) for f in frames]
    out = []
    for r in results:
        good = [e.angle_deg - apo[r.index] for e in raw.get(r.index, []) if not e.degenerate]
        out.append(FrameAngle(r.index, float(np.mean(good)) if good else None, len(good), not good))
    return out

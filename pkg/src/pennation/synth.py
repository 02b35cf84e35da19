"""Synthetic ultrasound-like frames and videos with exact ground truth.

A frame is a dark background with two bright, straight aponeurosis bands and
periodic bright fascicle lines at a known angle between them, plus additive
Gaussian speckle. The speckle may be spatially correlated (``speckle_size``
gives the axial/lateral smoothing sigma in pixels) to imitate the laterally
elongated grain of B-mode images. Realistic acoustics are out of scope.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .imaging import LineFit, write_png


@dataclass(frozen=True)
class ApoBand:
    row: float  # top row of the band at x = 0
    thickness: int
    slope: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    width: int = 320
    height: int = 240
    fascicle_angle_deg: float = 30.0
    fascicle_spacing: float = 12.0
    fascicle_width: float = 3.0
    apo_rows: tuple[ApoBand, ApoBand] = (ApoBand(20, 8), ApoBand(210, 8))
    speckle_sigma: float = 0.0
    seed: int = 0
    background: float = 30.0
    fascicle_level: float = 110.0
    apo_level: float = 230.0
    speckle_size: tuple[float, float] = (0.0, 0.0)
    phase: Optional[float] = None  # fascicle offset in px; drawn from the seed when None
    black_margins: tuple[int, int, int, int] = (0, 0, 0, 0)  # top, bottom, left, right
    # fascicle contrast factors at evenly spaced columns, linearly interpolated
    visibility: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class FrameTruth:
    fascicle_angle_deg: float
    upper_border: LineFit  # lower border of the superficial band
    lower_border: LineFit  # upper border of the deep band

    @property
    def pennation_deg(self) -> float:
        return self.fascicle_angle_deg - self.lower_border.angle_deg


def stripe_pattern(height: int, width: int, angle_deg: float, spacing: Optional[float],
                   line_width: float, phase: float = 0.0) -> np.ndarray:
    """Bright lines at ``angle_deg`` (y-up) with Gaussian cross profile, values in [0, 1].

    ``line_width`` is the full width at half maximum. With ``spacing=None`` a
    single line passes ``phase`` pixels from the image center.
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    a = math.radians(angle_deg)
    s = math.sin(a) * (xs - (width - 1) / 2.0) + math.cos(a) * (ys - (height - 1) / 2.0) - phase
    if spacing is None:
        d = np.abs(s)
    else:
        u = s / spacing
        d = spacing * np.abs(u - np.floor(u + 0.5))
    sig = line_width / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return np.exp(-0.5 * (d / sig) ** 2)


def _band_rows(band: ApoBand, width: int) -> np.ndarray:
    """Integer top row of ``band`` in every column."""
    return np.floor(band.row + band.slope * np.arange(width) + 0.5).astype(np.int64)


def speckle_field(shape, sigma: float, size: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(shape)
    if sigma == 0:
        return np.zeros(shape)
    sy, sx = size
    if sy > 0 or sx > 0:
        noise = ndimage.gaussian_filter(noise, (sy, sx), mode="wrap")
        noise /= noise.std()
    return sigma * noise


def generate_frame(spec: SynthSpec) -> tuple[np.ndarray, FrameTruth]:
    """Render one frame (8-bit valued floats) and its ground truth."""
    upper, lower = spec.apo_rows
    w, h = spec.width, spec.height
    top, bottom, left, right = spec.black_margins
    inner_h, inner_w = h - top - bottom, w - left - right
    if inner_h < 1 or inner_w < 1:
        raise ParameterError("black margins cover the whole frame")
    up_top = _band_rows(upper, inner_w)
    up_bottom = up_top + upper.thickness - 1
    lo_top = _band_rows(lower, inner_w)
    if np.any(lo_top <= up_bottom + 1):
        raise ParameterError("aponeurosis bands overlap")
    if np.any(up_top < 0) or np.any(lo_top + lower.thickness > inner_h):
        raise ParameterError("aponeurosis bands leave the frame")
    rng = np.random.default_rng(spec.seed)
    phase = spec.phase if spec.phase is not None else float(rng.uniform(0.0, spec.fascicle_spacing))

    inner = np.full((inner_h, inner_w), spec.background, dtype=np.float64)
    rows = np.arange(inner_h)[:, None]
    ut, ub, lt = up_top, up_bottom, lo_top
    muscle = (rows > ub[None, :]) & (rows < lt[None, :])
    stripes = stripe_pattern(inner_h, inner_w, spec.fascicle_angle_deg, spec.fascicle_spacing,
                             spec.fascicle_width, phase)
    if spec.visibility is not None:
        knots = np.linspace(0.0, inner_w - 1.0, len(spec.visibility))
        stripes = stripes * np.interp(np.arange(inner_w), knots, spec.visibility)[None, :]
    inner += muscle * (spec.fascicle_level - spec.background) * stripes
    in_upper = (rows >= ut[None, :]) & (rows <= ub[None, :])
    in_lower = (rows >= lt[None, :]) & (rows < lt[None, :] + lower.thickness)
    inner[in_upper | in_lower] = spec.apo_level
    inner += speckle_field(inner.shape, spec.speckle_sigma, spec.speckle_size, rng)
    inner = np.clip(np.floor(inner + 0.5), 0, 255)

    frame = np.zeros((h, w))
    frame[top:top + inner_h, left:left + inner_w] = inner
    truth = FrameTruth(
        fascicle_angle_deg=spec.fascicle_angle_deg,
        upper_border=LineFit(upper.slope, upper.row + upper.thickness - 1).shifted(left, top),
        lower_border=LineFit(lower.slope, lower.row).shifted(left, top),
    )
    return frame, truth


# ----------------------------------------------------------------- videos


def ramp_trajectory(n: int, start: float, stop: float) -> np.ndarray:
    return np.linspace(start, stop, n)


def sinusoid_trajectory(n: int, center: float, amplitude: float, periods: float = 1.0) -> np.ndarray:
    t = np.arange(n) / max(n - 1, 1)
    return center + amplitude * np.sin(2.0 * math.pi * periods * t)


@dataclass
class SynthVideo:
    frames: list[np.ndarray]
    truths: list[FrameTruth] = field(default_factory=list)


def render_video(base: SynthSpec, angles: Sequence[float]) -> SynthVideo:
    """Frames for an angle trajectory; frame ``i`` uses seed ``base.seed + i``."""
    angles = np.asarray(angles, dtype=np.float64)
    if np.any(angles <= 0) or np.any(angles >= 90):
        raise ParameterError("trajectory angles must lie in (0, 90)")
    video = SynthVideo(frames=[])
    for i, a in enumerate(angles):
        img, truth = generate_frame(replace(base, fascicle_angle_deg=float(a), seed=base.seed + i))
        video.frames.append(img)
        video.truths.append(truth)
    return video


def expert_annotations(truths: Sequence[FrameTruth], jitter_deg: float = 1.0, seed: int = 0) -> dict:
    """Annotation document with nine jittered copies of each true pennation angle."""
    rng = np.random.default_rng(seed)
    frames = []
    for i, t in enumerate(truths):
        angles = t.pennation_deg + jitter_deg * rng.standard_normal(9)
        apo = t.lower_border.angle_deg + 0.1 * jitter_deg * rng.standard_normal(3)
        frames.append({
            "index": i,
            "expert_angles": [round(float(a), 6) for a in angles],
            "expert_apo_angles": [round(float(a), 6) for a in apo],
        })
    return {"frames": frames}


TRUTH_COLUMNS = ("frame", "fascicle_angle_deg", "upper_apo_slope", "lower_apo_slope")


def generate_video(base: SynthSpec, angles: Sequence[float], out_dir, jitter_deg: float = 1.0) -> SynthVideo:
    """Write ``frame_NNNN.png``, ``truth.csv`` and ``annotations.json`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    video = render_video(base, angles)
    for i, img in enumerate(video.frames):
        write_png(out / f"frame_{i:04d}.png", img)
    with open(out / "truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRUTH_COLUMNS)
        for i, t in enumerate(video.truths):
            writer.writerow([i, f"{t.fascicle_angle_deg:.6f}", f"{t.upper_border.slope:.6f}",
                             f"{t.lower_border.slope:.6f}"])
    with open(out / "annotations.json", "w") as fh:
        json.dump(expert_annotations(video.truths, jitter_deg, base.seed), fh, indent=1)
    return video


def read_truth(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"frame": int(r["frame"]), "fascicle_angle_deg": float(r["fascicle_angle_deg"]),
             "upper_apo_slope": float(r["upper_apo_slope"]), "lower_apo_slope": float(r["lower_apo_slope"])}
            for r in csv.DictReader(fh)
        ]

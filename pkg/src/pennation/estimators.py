"""Fascicle orientation estimators over a gray subimage.

All four scan the fascicle window of 15..70 degrees (y-up convention):

``projection``
    maximum variation of the skewed projection profile,
``glcm``
    minimum off-diagonal concentration of the gray-level co-occurrence matrix,
    summed over shift lengths 1..40,
``radon``
    position of the sinogram maximum,
``frangi``
    mode of the vesselness-weighted orientation density.

Degenerate inputs (no structure) never raise; they return the lower window
bound with ``degenerate=True`` so that batch runs keep going.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .errors import ParameterError
from .imaging import as_image, rescale_to_byte_range
from .transforms import (
    FASCICLE_SCALES,
    FASCICLE_WINDOW,
    frangi_vesselness,
    angle_density,
    radon_enhance,
    radon_forward,
)

ANGLE_GRID = np.arange(FASCICLE_WINDOW[0], FASCICLE_WINDOW[1] + 0.25, 0.5)
GLCM_LEVELS = 64
GLCM_MAX_SHIFT = 40
METHODS = ("radon", "frangi", "projection", "glcm")
PREPROCS = ("none", "frangi", "radon")

# Pre-processing x estimation pairs that are supported. A method paired with
# its own transform (frangi/frangi, radon/radon) runs that transform only once.
COMBINATIONS = (
    ("frangi", "frangi"),
    ("radon", "radon"),
    ("glcm", "none"),
    ("glcm", "frangi"),
    ("glcm", "radon"),
    ("projection", "none"),
    ("projection", "frangi"),
    ("projection", "radon"),
)



@dataclass(frozen=True)
class AngleEstimate:
    angle_deg: float
    method: str
    preproc: str = "none"
    score: float = 0.0
    degenerate: bool = False
    frame: Optional[int] = None
    subregion: Union[int, str, None] = None

    def at(self, frame: Optional[int], subregion: Union[int, str, None]) -> "AngleEstimate":
        return replace(self, frame=frame, subregion=subregion)


def combination_table() -> str:
    """Human-readable list of the supported (method, preproc) pairs."""
    return ", ".join(f"{m}+{p}" for m, p in COMBINATIONS)


# -------------------------------------------------------------- projection


def projection_profiles(img: np.ndarray, angles_deg=ANGLE_GRID) -> np.ndarray:
    """Skewed projection profiles ``h_a(y)`` for every angle, shape ``(n_angles, n_y)``.

    ``h_a(y) = sum_x f(x cos a - y sin a, x sin a + y cos a)`` in centered y-up
    coordinates, where ``f`` is sampled at the nearest pixel and is zero
    outside the image. ``x`` and ``y`` range over the full rotated bounding
    box so no mass is lost at any angle.
    """
    img = as_image(img)
    h, w = img.shape
    half = int(math.ceil(math.hypot(h - 1, w - 1) / 2.0)) + 1
    t = np.arange(-half, half + 1, dtype=np.float64)
    # zero padding wide enough for every lattice point of the rotated square
    pad = int(math.ceil(half * math.sqrt(2.0))) + 2
    padded = np.zeros((h + 2 * pad, w + 2 * pad))
    padded[pad:pad + h, pad:pad + w] = img
    flat = padded.ravel()
    stride = padded.shape[1]
    cx, cy = (w - 1) / 2.0 + pad + 0.5, (h - 1) / 2.0 + pad + 0.5
    xs, ys = t[None, :], t[:, None]  # grid rows are profile bins
    angles = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    profiles = np.empty((angles.size, t.size))
    for i, a in enumerate(angles):
        ca, sa = math.cos(a), math.sin(a)
        # coordinates are positive here, so truncation rounds half up
        col = (cx + xs * ca - ys * sa).astype(np.intp)
        idx = (cy - xs * sa - ys * ca).astype(np.intp)
        idx *= stride
        idx += col
        profiles[i] = flat[idx].sum(axis=1)
    return profiles


def profile_variation(profiles: np.ndarray) -> np.ndarray:
    """Sum of squared successive differences of each profile (last axis)."""
    d = np.diff(profiles, axis=-1)
    return np.sum(d * d, axis=-1)


def _flat_within(values: np.ndarray, rel: float = 1e-9) -> bool:
    vmax = float(np.max(np.abs(values)))
    return float(np.ptp(values)) <= rel * vmax


def estimate_projection(img: np.ndarray) -> AngleEstimate:
    variation = profile_variation(projection_profiles(img))
    i = int(np.argmax(variation))
    return AngleEstimate(
        angle_deg=float(ANGLE_GRID[i]),
        method="projection",
        score=float(variation[i]),
        degenerate=_flat_within(variation),
    )


# -------------------------------------------------------------------- GLCM


@dataclass(frozen=True)
class CooccurrenceMatrix:
    g_max: int
    counts: np.ndarray
    r: int
    alpha_deg: float

    @property
    def probabilities(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total > 0 else self.counts.astype(np.float64)


def quantize_levels(img: np.ndarray, g_max: int = GLCM_LEVELS) -> np.ndarray:
    """Max-normalized quantization to ``g_max`` gray levels ``0..g_max-1``."""
    img = np.maximum(as_image(img), 0.0)
    peak = float(img.max())
    if peak <= 0.0:
        return np.zeros(img.shape, dtype=np.int64)
    return np.minimum(np.floor(img * (g_max / peak)), g_max - 1).astype(np.int64)


def glcm_shift(r: int, alpha_deg: float) -> tuple[int, int]:
    """Pixel shift ``(dx, dy)`` of length ``r`` along ``alpha`` (image rows grow downward)."""
    a = math.radians(alpha_deg)
    return int(math.floor(r * math.cos(a) + 0.5)), int(math.floor(-r * math.sin(a) + 0.5))


def _overlap(shape, dx: int, dy: int):
    """Slices selecting pixels ``p`` and ``p + (dx, dy)`` that are both inside."""
    h, w = shape
    r0, r1 = max(0, -dy), min(h, h - dy)
    c0, c1 = max(0, -dx), min(w, w - dx)
    return (slice(r0, r1), slice(c0, c1)), (slice(r0 + dy, r1 + dy), slice(c0 + dx, c1 + dx))


def cooccurrence_matrix(levels: np.ndarray, r: int, alpha_deg: float,
                        g_max: int = GLCM_LEVELS) -> CooccurrenceMatrix:
    """Counts of level pairs ``(levels[p], levels[p + shift])`` over valid pixel pairs."""
    dx, dy = glcm_shift(r, alpha_deg)
    src, dst = _overlap(levels.shape, dx, dy)
    pairs = levels[src].ravel() * g_max + levels[dst].ravel()
    counts = np.bincount(pairs, minlength=g_max * g_max).reshape(g_max, g_max)
    return CooccurrenceMatrix(g_max=g_max, counts=counts, r=r, alpha_deg=alpha_deg)


def concentration(matrix: CooccurrenceMatrix) -> float:
    """Off-diagonal concentration ``sum (m - n)^2 P(m, n)``."""
    m = np.arange(matrix.g_max)
    weight = (m[:, None] - m[None, :]) ** 2
    return float(np.sum(weight * matrix.probabilities))


def glcm_concentration(img: np.ndarray, angles_deg=ANGLE_GRID, max_shift: int = GLCM_MAX_SHIFT,
                       g_max: int = GLCM_LEVELS) -> np.ndarray:
    """Concentration summed over shift lengths ``1..max_shift`` for every angle.

    Uses the identity ``sum (m-n)^2 P(m,n) = mean over pairs of (q_p - q_{p+d})^2``
    and evaluates each distinct rounded shift once.
    """
    q = quantize_levels(img, g_max).astype(np.float64)
    if min(q.shape) <= max_shift:
        raise ParameterError(f"GLCM needs at least {max_shift + 1} pixels in each dimension, got {q.shape}")
    cache: dict[tuple[int, int], float] = {}
    out = np.zeros(len(angles_deg))
    for i, alpha in enumerate(angles_deg):
        total = 0.0
        for r in range(1, max_shift + 1):
            d = glcm_shift(r, alpha)
            if d not in cache:
                src, dst = _overlap(q.shape, *d)
                diff = q[src] - q[dst]
                cache[d] = float(np.mean(diff * diff))
            total += cache[d]
        out[i] = total
    return out


def estimate_glcm(img: np.ndarray) -> AngleEstimate:
    conc = glcm_concentration(img)
    i = int(np.argmin(conc))
    return AngleEstimate(
        angle_deg=float(ANGLE_GRID[i]),
        method="glcm",
        score=float(conc[i]),
        degenerate=_flat_within(conc),
    )


# ------------------------------------------------------------------- Radon


def estimate_radon(img: np.ndarray) -> AngleEstimate:
    """Direction of the strongest line integral of the mean-free image."""
    img = as_image(img)
    centered = img - img.mean()
    sino = radon_forward(centered, ANGLE_GRID)
    flat_idx = int(np.argmax(sino.values))
    i = flat_idx // sino.values.shape[1]
    scale = float(np.abs(img).sum())
    degenerate = float(np.ptp(sino.values)) <= 1e-9 * scale
    return AngleEstimate(
        angle_deg=float(ANGLE_GRID[i]) if not degenerate else float(ANGLE_GRID[0]),
        method="radon",
        score=float(sino.values.flat[flat_idx]),
        degenerate=degenerate,
    )


# ------------------------------------------------------------------ Frangi


def estimate_frangi(img: np.ndarray, min_pixels: int = 10) -> AngleEstimate:
    vessel = frangi_vesselness(img, FASCICLE_SCALES, FASCICLE_WINDOW)
    mask = vessel.response > 0
    if np.count_nonzero(mask) < min_pixels:
        return AngleEstimate(angle_deg=FASCICLE_WINDOW[0], method="frangi", degenerate=True)
    dens = angle_density(vessel.orientation_deg[mask], vessel.response[mask], FASCICLE_WINDOW)
    return AngleEstimate(angle_deg=dens.mode, method="frangi", score=float(dens.density.max()))


ESTIMATORS: dict[str, Callable[[np.ndarray], AngleEstimate]] = {
    "projection": estimate_projection,
    "glcm": estimate_glcm,
    "radon": estimate_radon,
    "frangi": estimate_frangi,
}


# -------------------------------------------------------------- combination


def check_combination(method: str, preproc: str) -> None:
    if (method, preproc) not in COMBINATIONS:
        raise ParameterError(
            f"unsupported combination {method}+{preproc}; choose one of: {combination_table()}"
        )


def preprocess(img: np.ndarray, preproc: str) -> np.ndarray:
    """Enhancement image fed to a downstream estimator."""
    if preproc == "none":
        return as_image(img)
    if preproc == "frangi":
        return rescale_to_byte_range(frangi_vesselness(img, FASCICLE_SCALES, FASCICLE_WINDOW).response)
    if preproc == "radon":
        return radon_enhance(img)
    raise ParameterError(f"unknown pre-processing {preproc!r}")


def prepare(img: np.ndarray, method: str, preproc: str) -> np.ndarray:
    """Image the estimator of ``method`` should see for this combination."""
    check_combination(method, preproc)
    if method == preproc:
        return as_image(img)
    return preprocess(img, preproc)


def estimate_prepared(prepared: np.ndarray, method: str, preproc: str) -> AngleEstimate:
    """Run ``method`` on an image already returned by :func:`prepare`."""
    check_combination(method, preproc)
    return replace(ESTIMATORS[method](prepared), preproc=preproc)


def estimate(img: np.ndarray, method: str, preproc: str = "none") -> AngleEstimate:
    return estimate_prepared(prepare(img, method, preproc), method, preproc)


def pennation_angle(fascicle: AngleEstimate, ctx) -> float:
    """Angle between the fascicle and the deep aponeurosis, both y-up."""
    return fascicle.angle_deg - ctx.deep_apo_angle

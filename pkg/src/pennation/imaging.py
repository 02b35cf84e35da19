"""Grayscale raster primitives.

Images are plain 2-D ``float64`` numpy arrays indexed ``[row, col]`` with rows
growing downward. Gray values nominally lie in [0, 255] but intermediate
results (e.g. enhancement outputs) may leave that range; only the histogram
based operations quantize to 256 bins.

Angles follow one convention throughout the package: counterclockwise
positive in a y-up frame, i.e. ``angle = atan2(-dy, dx)`` for an image-space
displacement ``(dx, dy)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateInputError, ParameterError

FRAME_SUFFIXES = (".png", ".pgm")


def as_image(data) -> np.ndarray:
    """Return ``data`` as a 2-D float64 array, validating its shape."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ParameterError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ParameterError("image must be at least 1x1")
    return img


def quantize_256(img: np.ndarray) -> np.ndarray:
    """Map real gray values to 256 integer bins (round to nearest, clip)."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.int64)


def rescale_to_byte_range(img: np.ndarray) -> np.ndarray:
    """Linearly map ``[min, max]`` to ``[0, 255]``; constant images map to 0."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) * (255.0 / (hi - lo))


# --------------------------------------------------------------------- I/O


def read_image(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG or binary PGM (P5) frame."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "1", "LA", "RGB", "RGBA", "I;16", "I"):
            raise ParameterError(f"{path}: unsupported image mode {im.mode}")
        if im.mode in ("I;16", "I"):
            raise ParameterError(f"{path}: 16-bit rasters are not supported")
        return np.asarray(im.convert("L"), dtype=np.float64)


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def write_png(path, img: np.ndarray) -> None:
    Image.fromarray(_to_uint8(img), mode="L").save(path, format="PNG")


def write_pgm(path, img: np.ndarray, rescale: bool = False) -> None:
    """Write a binary P5 PGM; with ``rescale`` the values are first mapped to 0-255."""
    data = rescale_to_byte_range(img) if rescale else img
    data = _to_uint8(data)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def list_frames(directory) -> list[Path]:
    """Frame files of ``directory`` in lexicographic filename order."""
    directory = Path(directory)
    return sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES and p.is_file()),
        key=lambda p: p.name,
    )


# ------------------------------------------------------------- filtering


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel with radius ``ceil(3 * sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_gaussian(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with edge replication at the borders."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    img = as_image(img)
    k = gaussian_kernel(sigma)
    out = ndimage.convolve1d(img, k, axis=0, mode="nearest")
    return ndimage.convolve1d(out, k, axis=1, mode="nearest")


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


def sobel_gradients(img: np.ndarray) -> GradientField:
    """3x3 Sobel gradients; ``gy`` is positive for values increasing downward.

    Border pixels get zero gradient.
    """
    img = as_image(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ParameterError("sobel_gradients needs an image of at least 3x3 pixels")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    # left/right and top/bottom neighbour differences, weighted 1-2-1
    dx = img[:, 2:] - img[:, :-2]
    gx[1:-1, 1:-1] = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    dy = img[2:, :] - img[:-2, :]
    gy[1:-1, 1:-1] = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return GradientField(gx=gx, gy=gy, magnitude=np.hypot(gx, gy))


# ----------------------------------------------------------- segmentation


def otsu_threshold(img: np.ndarray) -> int:
    """Otsu threshold on the 256-bin histogram.

    Pixels whose bin is strictly greater than the returned level are
    foreground. Among equally good levels the smallest one is returned.
    """
    bins = quantize_256(as_image(img))
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateInputError("Otsu threshold needs at least two distinct gray levels")
    p = hist / hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(p)[:-1]
    m0 = np.cumsum(p * levels)[:-1]
    mt = float(np.dot(p, levels))
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0) ** 2 / (w0 * w1)
    between[(w0 <= 0) | (w1 <= 1e-15)] = -1.0
    return int(np.argmax(between))


def binarize(img: np.ndarray, threshold: int) -> np.ndarray:
    """0/255 image of the pixels whose 256-bin level exceeds ``threshold``."""
    return np.where(quantize_256(img) > threshold, 255.0, 0.0)


@dataclass(frozen=True)
class Component:
    """One connected foreground segment; ``rows``/``cols`` are in row-major order."""

    rows: np.ndarray
    cols: np.ndarray

    @property
    def area(self) -> int:
        return int(self.rows.size)

    @property
    def mean_row(self) -> float:
        return float(self.rows.mean())


def connected_components(binary: np.ndarray) -> list[Component]:
    """8-connected components of a {0, 255} image, largest first.

    Equal areas are ordered by their first pixel in row-major order.
    """
    binary = as_image(binary)
    if not np.isin(binary, (0.0, 255.0)).all():
        raise ParameterError("connected_components expects a binary image with values {0, 255}")
    labels, n = ndimage.label(binary > 0, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    starts = np.searchsorted(sorted_labels, np.arange(1, n + 1))
    ends = np.searchsorted(sorted_labels, np.arange(1, n + 1), side="right")
    width = binary.shape[1]
    comps = []
    for s, e in zip(starts, ends):
        idx = order[s:e]  # stable sort keeps row-major order within a label
        comps.append(Component(rows=idx // width, cols=idx % width))
    comps.sort(key=lambda c: (-c.area, int(c.rows[0]) * width + int(c.cols[0])))
    return comps


# ------------------------------------------------------------- line fit


@dataclass(frozen=True)
class LineFit:
    """Line ``y = slope * x + intercept`` in image coordinates."""

    slope: float
    intercept: float

    @property
    def angle_deg(self) -> float:
        # y grows downward, so a positive slope descends to the right
        return -math.degrees(math.atan(self.slope))

    def y_at(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept

    def shifted(self, dx: float, dy: float) -> "LineFit":
        """The same line expressed in coordinates translated by ``(dx, dy)``."""
        return LineFit(self.slope, self.intercept + dy - self.slope * dx)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "angle_deg": self.angle_deg}


def fit_line_least_squares(points: Iterable[Sequence[float]]) -> LineFit:
    """Ordinary least squares fit of y on x to ``(x, y)`` points."""
    pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise DegenerateInputError("all points share one x coordinate; cannot fit y on x")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    return LineFit(slope=slope, intercept=float(ym - slope * xm))


def line_residual_ss(line: LineFit, points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.sum((pts[:, 1] - line.y_at(pts[:, 0])) ** 2))


"""CSV/JSON/SVG writers with fixed number formatting.

Every float goes through :func:`fmt` so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

ESTIMATE_COLUMNS = ("frame", "subregion", "method", "preproc", "angle_deg", "score", "degenerate",
                    "deep_apo_angle_deg")
PENNATION_COLUMNS = ("frame", "fitted_angle_deg", "n_points", "quality_warning")
SUMMARY_COLUMNS = ("method", "preproc", "region_mode", "icc3", "mae_deg", "hit_pct", "n_frames")
ESTIMATES_ONLY_COLUMNS = ("method", "preproc", "region_mode", "n_frames", "n_valid",
                          "mean_angle_deg", "sd_angle_deg")


def fmt(value) -> str:
    """Canonical text for a CSV cell: floats at 6 decimals, ``None`` empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        out = f"{value:.6f}"
        return "0.000000" if out == "-0.000000" else out
    return str(value)


def _canonical(obj):
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, Mapping):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])


def write_json(path, doc) -> None:
    """JSON with floats rounded to 6 decimals and sorted keys."""
    with open(path, "w") as fh:
        json.dump(_canonical(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_pennation_csv(path) -> dict[int, Optional[float]]:
    out = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            v = rec["fitted_angle_deg"]
            out[int(rec["frame"])] = float(v) if v not in ("", "nan") else None
    return out


# -------------------------------------------------------------------- SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def trajectory_svg(series: Mapping[str, Mapping[int, float]], band: Optional[Mapping[int, tuple]] = None,
                   width: int = 720, height: int = 360) -> str:
    """Angle-vs-frame plot: one ``<path class="estimate">`` per series.

    ``band`` maps frame to ``(low, mean, high)``; the range is shaded gray
    and the mean is drawn dashed.
    """
    pad = 40
    frames = sorted({f for s in series.values() for f in s} | set(band or {}))
    values = [v for s in series.values() for v in s.values() if v is not None]
    if band:
        values += [v for lo_mid_hi in band.values() for v in lo_mid_hi]
    if not frames or not values:
        raise ValueError("nothing to plot")
    f0, f1 = frames[0], max(frames[-1], frames[0] + 1)
    v0, v1 = min(values) - 1.0, max(values) + 1.0

    def px(f, v):
        x = pad + (f - f0) / (f1 - f0) * (width - 2 * pad)
        y = height - pad - (v - v0) / (v1 - v0) * (height - 2 * pad)
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">frame</text>',
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" '
        f'text-anchor="middle">pennation angle (deg)</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{v0:.1f}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{v1:.1f}</text>',
    ]
    if band:
        bf = sorted(band)
        upper = [px(f, band[f][2]) for f in bf]
        lower = [px(f, band[f][0]) for f in reversed(bf)]
        parts.append(f'<polygon class="inter-observer" points="{" ".join(upper + lower)}" '
                     f'fill="#bbbbbb" fill-opacity="0.6" stroke="none"/>')
        parts.append(f'<polyline class="inter-mean" points="{" ".join(px(f, band[f][1]) for f in bf)}" '
                     f'fill="none" stroke="#555555" stroke-dasharray="4 3"/>')
    for i, (label, s) in enumerate(series.items()):
        pts = [px(f, s[f]) for f in sorted(s) if s[f] is not None]
        if not pts:
            continue
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<path class="estimate" data-label="{_escape(label)}" d="M {" L ".join(pts)}" '
                     f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad + 6}" y="{pad + 12 + 14 * i}" font-size="10" fill="{color}">'
                     f'{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def write_svg(path, text: str) -> None:
    Path(path).write_text(text)

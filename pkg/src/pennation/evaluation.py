"""Agreement of estimated angles with multi-expert annotations.

Three indices per run, each against the per-frame inter-observer statistics
of nine expert readings (three experts, three sessions): ICC(3,1) with the
inter-observer mean, mean absolute error to that mean, and the percentage of
frames whose estimate lies inside the inter-observer range.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .errors import DegenerateInputError, FrameMismatchError, ParameterError

N_EXPERT_READINGS = 9


@dataclass(frozen=True)
class FrameAnnotation:
    expert_angles: np.ndarray
    expert_apo_angles: Optional[np.ndarray] = None

    @property
    def inter_mean(self) -> float:
        return float(np.mean(self.expert_angles))

    @property
    def inter_min(self) -> float:
        return float(np.min(self.expert_angles))

    @property
    def inter_max(self) -> float:
        return float(np.max(self.expert_angles))


class AnnotationSet(dict):
    """Mapping ``frame index -> FrameAnnotation``."""

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AnnotationSet":
        out = cls()
        for rec in doc.get("frames", []):
            idx = int(rec["index"])
            angles = np.asarray(rec["expert_angles"], dtype=np.float64)
            if angles.shape != (N_EXPERT_READINGS,):
                raise ParameterError(f"frame {idx}: expected {N_EXPERT_READINGS} expert angles, got {angles.size}")
            if np.any(angles <= 0) or np.any(angles >= 90):
                raise ParameterError(f"frame {idx}: expert angles must lie in (0, 90)")
            apo = rec.get("expert_apo_angles")
            if idx in out:
                raise ParameterError(f"frame {idx} annotated twice")
            out[idx] = FrameAnnotation(angles, None if apo is None else np.asarray(apo, dtype=np.float64))
        return out

    @classmethod
    def load(cls, path) -> "AnnotationSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def inter_means(self) -> dict[int, float]:
        return {i: a.inter_mean for i, a in self.items()}


class AnovaSums(NamedTuple):
    ss_rows: float
    ss_cols: float
    ss_error: float
    ss_total: float
    n_items: int
    n_raters: int

    @property
    def bms(self) -> float:
        return self.ss_rows / (self.n_items - 1)

    @property
    def ems(self) -> float:
        return self.ss_error / ((self.n_items - 1) * (self.n_raters - 1))


def anova_two_way(ratings) -> AnovaSums:
    """Two-way ANOVA decomposition of an ``items x raters`` matrix without replication."""
    y = np.asarray(ratings, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2 or y.shape[1] < 2:
        raise ParameterError("ratings must be a matrix with at least 2 items and 2 raters")
    if not np.all(np.isfinite(y)):
        raise ParameterError("ratings contain missing or non-finite cells")
    n, k = y.shape
    grand = y.mean()
    ss_rows = k * float(np.sum((y.mean(axis=1) - grand) ** 2))
    ss_cols = n * float(np.sum((y.mean(axis=0) - grand) ** 2))
    ss_total = float(np.sum((y - grand) ** 2))
    resid = y - y.mean(axis=1, keepdims=True) - y.mean(axis=0, keepdims=True) + grand
    ss_error = float(np.sum(resid ** 2))
    return AnovaSums(ss_rows, ss_cols, ss_error, ss_total, n, k)


def icc3(ratings) -> float:
    """ICC(3,1): two-way mixed model, consistency, single rater."""
    sums = anova_two_way(ratings)
    bms, ems = sums.bms, sums.ems
    if bms <= 0.0:
        raise DegenerateInputError("ratings have no between-item variance")
    return (bms - ems) / (bms + (sums.n_raters - 1) * ems)


def _common_frames(est: Mapping[int, float], other: Mapping) -> list[int]:
    frames = sorted(set(est) & set(other))
    if not frames:
        raise ParameterError("estimates and reference share no frames")
    return frames


def mae(est: Mapping[int, float], truth: Mapping[int, float]) -> float:
    """Mean absolute difference over the frames present in both mappings."""
    frames = _common_frames(est, truth)
    return float(np.mean([abs(est[f] - truth[f]) for f in frames]))


def hit_rate(est: Mapping[int, float], annotations: Mapping[int, FrameAnnotation]) -> float:
    """Percent of common frames whose estimate is inside ``[inter_min, inter_max]``."""
    frames = _common_frames(est, annotations)
    hits = sum(annotations[f].inter_min <= est[f] <= annotations[f].inter_max for f in frames)
    return 100.0 * hits / len(frames)


@dataclass
class EvalReport:
    icc3: float
    mae_deg: float
    hit_pct: float
    per_frame: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"icc3": self.icc3, "mae_deg": self.mae_deg, "hit_pct": self.hit_pct,
                "per_frame": self.per_frame}


def evaluate_run(est: Mapping[int, float], annotations: AnnotationSet, strict: bool = True) -> EvalReport:
    """ICC3, MAE and hit rate of per-frame estimates against annotations.

    With ``strict`` the frame sets must be identical; otherwise their
    intersection is scored.
    """
    est = {int(f): float(v) for f, v in est.items() if v is not None}
    if strict and set(est) != set(annotations):
        raise FrameMismatchError(set(annotations) - set(est), set(est) - set(annotations))
    frames = sorted(set(est) & set(annotations))
    if len(frames) < 2:
        raise ParameterError("need at least two matched frames to evaluate")
    means = annotations.inter_means()
    ratings = np.array([[est[f], means[f]] for f in frames])
    score = icc3(ratings)
    per_frame = []
    for f in frames:
        a = annotations[f]
        per_frame.append({
            "frame": f,
            "estimate_deg": est[f],
            "inter_mean_deg": a.inter_mean,
            "inter_min_deg": a.inter_min,
            "inter_max_deg": a.inter_max,
            "residual_deg": est[f] - a.inter_mean,
            "hit": bool(a.inter_min <= est[f] <= a.inter_max),
        })
    return EvalReport(
        icc3=score,
        mae_deg=mae(est, means),
        hit_pct=hit_rate(est, annotations),
        per_frame=per_frame,
    )

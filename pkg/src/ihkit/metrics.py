"""Hallucination indicator, corpus prevalence/severity metrics, and the
collar-tolerant precision/recall/F-beta/IoU validation scores.

Corpus metrics: over the M evaluable clips (ground-truth label outside the
speech/music set), prevalence is the fraction of clips with any detected
hallucination and severity is the mean hallucinated fraction of clip
duration.

Validation scores are frame-level and duration-weighted: predictions and
references are rasterized, frames whose midpoint falls within the collar of
a reference boundary are discarded, and the remaining frame durations are
pooled over clips and kinds into micro-averaged precision, recall, F-beta
and IoU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .segments import (
    DEFAULT_BETA,
    DEFAULT_COLLAR_S,
    DEFAULT_FRAME_LEN_S,
    US_PER_CS,
    US_PER_SECOND,
    ClipTimeline,
    SegmentKind,
    doubled_midpoints_us,
    rasterize,
    seconds_to_cs,
    union_duration,
)

DURATION_TOLERANCE_CS = 5  # 0.05 s


class MetricsError(ValueError):
    pass


class NoEvaluableClips(MetricsError):
    """Every clip in the corpus was excluded by the label filter."""


@dataclass(frozen=True)
class ClipMeta:
    """Clip identity plus the ground-truth label used for candidate filtering."""

    clip_id: str
    label: str
    in_ysm: bool
    duration_s: float
    model: str = ""
    sublabel: str = ""

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise MetricsError(f"clip {self.clip_id!r}: duration_s must be positive")


def load_label_set(path) -> frozenset[str]:
    """Read the speech/music label list: one label per line, '#' comments."""
    labels: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if line:
                labels.add(line.lower())
    return frozenset(labels)


def label_in_set(label: str, label_set: frozenset[str]) -> bool:
    """Case-insensitive exact membership."""
    return label.strip().lower() in label_set


@dataclass(frozen=True)
class ClipIhResult:
    clip_id: str
    excluded: bool
    is_ih: int
    d_s: float
    t_s: float


def evaluate_clip(meta: ClipMeta, fused: ClipTimeline) -> ClipIhResult:
    """Apply the per-clip hallucination indicator to a fused timeline.

    Clips whose ground-truth label is a speech/music label are excluded and
    carry zeroed values.  Otherwise the hallucinated duration is the union of
    speech and music time (counted once where they overlap) and the indicator
    fires iff that union is non-empty.
    """
    if meta.clip_id != fused.clip_id:
        raise MetricsError(f"clip_id mismatch: {meta.clip_id!r} vs {fused.clip_id!r}")
    meta_cs = seconds_to_cs(meta.duration_s, "duration_s")
    if abs(meta_cs - fused.duration_cs) > DURATION_TOLERANCE_CS:
        raise MetricsError(
            f"clip {meta.clip_id!r}: manifest duration {meta.duration_s} differs from "
            f"timeline duration {fused.duration_s} by more than 0.05 s"
        )
    if meta.in_ysm:
        return ClipIhResult(meta.clip_id, True, 0, 0.0, meta.duration_s)
    d_s = union_duration(fused.segments)
    d_s = min(d_s, meta.duration_s)
    return ClipIhResult(meta.clip_id, False, int(d_s > 0), d_s, meta.duration_s)


def corpus_ih(results: Iterable[ClipIhResult]) -> dict:
    """Corpus prevalence and severity over the non-excluded clips.

    Returns fractions in [0, 1]; rendering as percentages is the exporter's
    job.  Deterministic under reordering: clips are summed in clip_id order.
    """
    results = list(results)
    evaluable = sorted((r for r in results if not r.excluded), key=lambda r: r.clip_id)
    if not evaluable:
        raise NoEvaluableClips("no evaluable clips: every clip was excluded")
    m = len(evaluable)
    ih_vid = sum(1 for r in evaluable if r.d_s > 0) / m
    ih_dur = sum(r.d_s / r.t_s for r in evaluable) / m
    return {
        "ih_at_vid": ih_vid,
        "ih_at_dur": ih_dur,
        "m": m,
        "excluded": len(results) - m,
    }


def f_beta(precision: float, recall: float, beta: float = DEFAULT_BETA) -> float:
    """Generalized F-score; beta < 1 weights precision above recall.

    Scale-invariant: feed fractions or percentages, get the same scale back.
    Returns 0 when the denominator vanishes.
    """
    if beta <= 0 or not math.isfinite(beta):
        raise MetricsError(f"beta must be positive, got {beta!r}")
    if precision < 0 or recall < 0:
        raise MetricsError(f"precision/recall must be non-negative, got {precision}, {recall}")
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def reduction_delta(before: float, after: float) -> float | None:
    """Signed percent reduction from before to after; None when undefined.

    Negative output means a regression.  A zero baseline has no defined
    relative change and is reported as not-applicable.
    """
    if before < 0 or after < 0:
        raise MetricsError(f"metric values must be non-negative, got {before}, {after}")
    if before == 0:
        return None
    return 100.0 * (before - after) / before


@dataclass(frozen=True)
class MatchScore:
    precision: float
    recall: float
    f_beta: float
    iou: float
    beta: float
    collar_s: float
    tp_s: float
    fp_s: float
    fn_s: float

    def to_dict(self) -> dict:
        return {
            "precision_pct": round(self.precision, 2),
            "recall_pct": round(self.recall, 2),
            "f_beta_pct": round(self.f_beta, 2),
            "iou_pct": round(self.iou, 2),
            "beta": self.beta,
            "collar_s": self.collar_s,
            "tp_s": round(self.tp_s, 4),
            "fp_s": round(self.fp_s, 4),
            "fn_s": round(self.fn_s, 4),
        }


def _collar_exclusion(
    m2: np.ndarray, ref: ClipTimeline, kind: SegmentKind, collar_cs: int
) -> np.ndarray:
    """Frames whose midpoint lies within the collar of any reference boundary."""
    excluded = np.zeros(m2.shape[0], dtype=bool)
    if collar_cs <= 0:
        return excluded
    collar_us = collar_cs * US_PER_CS
    for segment in ref.kind_segments(kind):
        for boundary_cs in (segment.interval.start_cs, segment.interval.end_cs):
            boundary_us = boundary_cs * US_PER_CS
            lo2 = 2 * (boundary_us - collar_us)
            hi2 = 2 * (boundary_us + collar_us)
            excluded |= (m2 >= lo2) & (m2 <= hi2)
    return excluded


def match_and_score(
    pred: Mapping[str, ClipTimeline],
    ref: Mapping[str, ClipTimeline],
    collar_s: float = DEFAULT_COLLAR_S,
    beta: float = DEFAULT_BETA,
    frame_len_s: float = DEFAULT_FRAME_LEN_S,
) -> MatchScore:
    """Score predicted timelines against reference timelines.

    Frame-level, duration-weighted matching pooled over clips and kinds.
    Conventions for empty pools: if both sides are empty everywhere the
    scores are 100, otherwise 0/0 ratios score 0.
    """
    if collar_s < 0:
        raise MetricsError(f"collar_s must be >= 0, got {collar_s}")
    pred_only = sorted(set(pred) - set(ref))
    ref_only = sorted(set(ref) - set(pred))
    if pred_only or ref_only:
        raise MetricsError(
            f"clip sets differ: only in pred {pred_only}, only in ref {ref_only}"
        )
    if not pred:
        raise MetricsError("no clips to score")
    collar_cs = seconds_to_cs(collar_s, "collar_s")

    tp_us = fp_us = fn_us = 0
    for clip_id in sorted(pred):
        p, r = pred[clip_id], ref[clip_id]
        if p.duration_cs != r.duration_cs:
            raise MetricsError(
                f"clip {clip_id!r}: pred/ref duration mismatch "
                f"{p.duration_s} vs {r.duration_s}"
            )
        p_grid = rasterize(p, frame_len_s)
        r_grid = rasterize(r, frame_len_s)
        m2 = doubled_midpoints_us(p_grid.frame_len_us, p.duration_cs)
        duration_us = p.duration_cs * US_PER_CS
        starts = np.arange(m2.shape[0], dtype=np.int64) * p_grid.frame_len_us
        frame_us = np.minimum(starts + p_grid.frame_len_us, duration_us) - starts
        for kind in SegmentKind:
            keep = ~_collar_exclusion(m2, r, kind, collar_cs)
            p_occ = p_grid.occupancy[kind]
            r_occ = r_grid.occupancy[kind]
            tp_us += int(frame_us[keep & p_occ & r_occ].sum())
            fp_us += int(frame_us[keep & p_occ & ~r_occ].sum())
            fn_us += int(frame_us[keep & ~p_occ & r_occ].sum())

    if tp_us == 0 and fp_us == 0 and fn_us == 0:
        precision = recall = iou = 100.0
    else:
        precision = 100.0 * tp_us / (tp_us + fp_us) if tp_us + fp_us else 0.0
        recall = 100.0 * tp_us / (tp_us + fn_us) if tp_us + fn_us else 0.0
        iou = 100.0 * tp_us / (tp_us + fp_us + fn_us)
    return MatchScore(
        precision=precision,
        recall=recall,
        f_beta=f_beta(precision, recall, beta),
        iou=iou,
        beta=beta,
        collar_s=collar_s,
        tp_s=tp_us / US_PER_SECOND,
        fp_s=fp_us / US_PER_SECOND,
        fn_s=fn_us / US_PER_SECOND,
    )


def corpus_report(
    results: Sequence[ClipIhResult], dataset: str = "", model: str = ""
) -> dict:
    """Machine-readable corpus report with percentages at two decimals."""
    stats = corpus_ih(list(results))
    return {
        "dataset": dataset,
        "model": model,
        "ih_at_vid_pct": round(100.0 * stats["ih_at_vid"], 2),
        "ih_at_dur_pct": round(100.0 * stats["ih_at_dur"], 2),
        "m": stats["m"],
        "excluded": stats.get("excluded", 0),
    }

"""Independent brute-force reference implementations used to check the
library.  Everything here works in plain float seconds per frame, with no
shared code or fixed-point arithmetic from the package under test."""

from __future__ import annotations

import math

import numpy as np

KINDS = ("speech", "music")


def frame_midpoints(duration_s: float, frame_len_s: float) -> np.ndarray:
    """Midpoint of every frame, final partial frame clamped to the clip end."""
    n = math.ceil(duration_s / frame_len_s - 1e-9)
    mids = (np.arange(n) + 0.5) * frame_len_s
    if n * frame_len_s > duration_s + 1e-12:
        mids[-1] = ((n - 1) * frame_len_s + duration_s) / 2.0
    return mids


def occupancy(spans: list[tuple[float, float]], mids: np.ndarray) -> np.ndarray:
    """Frame-by-frame membership test: start <= midpoint < end."""
    occ = np.zeros(mids.shape[0], dtype=bool)
    for start, end in spans:
        occ |= (mids >= start) & (mids < end)
    return occ


def spans_of(timeline, kind: str) -> list[tuple[float, float]]:
    return [
        (s.interval.start_s, s.interval.end_s)
        for s in timeline.segments
        if s.kind.value == kind
    ]


def vote(timelines, threshold: int, frame_len_s: float) -> dict[str, np.ndarray]:
    """Per-frame brute-force vote across detectors, per kind."""
    duration_s = timelines[0].duration_s
    mids = frame_midpoints(duration_s, frame_len_s)
    fused: dict[str, np.ndarray] = {}
    for kind in KINDS:
        votes = np.zeros(mids.shape[0], dtype=int)
        for timeline in timelines:
            votes += occupancy(spans_of(timeline, kind), mids)
        fused[kind] = votes >= threshold
    return fused


def union_duration(spans: list[tuple[float, float]]) -> float:
    """Union measure by integration over a fine grid of interval boundaries."""
    points = sorted({p for span in spans for p in span})
    total = 0.0
    for left, right in zip(points, points[1:]):
        mid = (left + right) / 2.0
        if any(start <= mid < end for start, end in spans):
            total += right - left
    return total


def match_counts(
    pred, ref, collar_s: float, frame_len_s: float
) -> tuple[int, int, int]:
    """Brute-force (tp, fp, fn) frame counts for one clip pair.

    Frames whose midpoint lies within collar_s of any reference boundary of
    the same kind are skipped entirely.
    """
    mids = frame_midpoints(ref.duration_s, frame_len_s)
    tp = fp = fn = 0
    for kind in KINDS:
        pred_spans = spans_of(pred, kind)
        ref_spans = spans_of(ref, kind)
        boundaries = [b for span in ref_spans for b in span]
        for mid in mids:
            if any(abs(mid - b) <= collar_s for b in boundaries):
                continue
            in_pred = any(s <= mid < e for s, e in pred_spans)
            in_ref = any(s <= mid < e for s, e in ref_spans)
            if in_pred and in_ref:
                tp += 1
            elif in_pred:
                fp += 1
            elif in_ref:
                fn += 1
    return tp, fp, fn


def pair_iou(spans_a: list[tuple[float, float]], spans_b: list[tuple[float, float]],
             horizon_s: float, frame_len_s: float = 0.01) -> tuple[int, int]:
    """(intersection, union) frame counts between two span sets."""
    mids = frame_midpoints(horizon_s, frame_len_s) if horizon_s > 0 else np.array([])
    occ_a = occupancy(spans_a, mids)
    occ_b = occupancy(spans_b, mids)
    return int((occ_a & occ_b).sum()), int((occ_a | occ_b).sum())

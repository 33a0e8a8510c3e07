"""Combine per-detector timelines into one fused timeline by frame voting.

Speech and music are voted as independent tracks on a rasterized grid; the
winning frames are reconstructed into segments and post-processed with the
shared merge/min-duration conventions so fused output follows the same
segment rules as human labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .segments import (
    DEFAULT_FRAME_LEN_S,
    DEFAULT_MERGE_GAP_S,
    DEFAULT_MIN_DUR_S,
    ClipTimeline,
    FrameGrid,
    SegmentKind,
    rasterize,
    segments_from_frames,
)

FUSED_SOURCE = "fused"


class FusionError(ValueError):
    """Inconsistent fusion inputs (clip/duration/K mismatch)."""


class FusionVariant(str, Enum):
    AND = "and"
    OR = "or"
    MAJORITY = "mv"


@dataclass(frozen=True)
class FusionRule:
    variant: FusionVariant
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", FusionVariant(self.variant))
        if self.k < 1:
            raise FusionError(f"detector count K must be >= 1, got {self.k}")

    @property
    def threshold(self) -> int:
        """Votes required to keep a frame: K for AND, 1 for OR, ceil(K/2) for MV."""
        if self.variant is FusionVariant.AND:
            return self.k
        if self.variant is FusionVariant.OR:
            return 1
        return (self.k + 1) // 2


def vote_grids(grids: Sequence[FrameGrid], threshold: int) -> dict[SegmentKind, np.ndarray]:
    """Per-kind frame-wise vote over already-rasterized detector grids."""
    out: dict[SegmentKind, np.ndarray] = {}
    for kind in SegmentKind:
        votes = np.zeros(grids[0].n_frames, dtype=np.int32)
        for grid in grids:
            votes += grid.occupancy[kind]
        out[kind] = votes >= threshold
    return out


def fuse(
    timelines: Sequence[ClipTimeline],
    rule: FusionRule,
    frame_len_s: float = DEFAULT_FRAME_LEN_S,
    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
    min_dur_s: float = DEFAULT_MIN_DUR_S,
) -> ClipTimeline:
    """Fuse K same-clip detector timelines into one timeline.

    A frame enters the fused output iff the number of detectors occupying it
    meets the rule's threshold.  The result is reconstructed to segments,
    normalized, and tagged with source "fused".
    """
    if len(timelines) != rule.k:
        raise FusionError(f"expected {rule.k} timelines for K={rule.k}, got {len(timelines)}")
    first = timelines[0]
    for timeline in timelines[1:]:
        if timeline.clip_id != first.clip_id:
            raise FusionError(
                f"clip_id mismatch: {first.clip_id!r} vs {timeline.clip_id!r}"
            )
        if timeline.duration_cs != first.duration_cs:
            raise FusionError(
                f"clip {first.clip_id!r}: duration mismatch "
                f"{first.duration_s} vs {timeline.duration_s}"
            )
    grids = [rasterize(t, frame_len_s) for t in timelines]
    fused_occ = vote_grids(grids, rule.threshold)
    fused_grid = FrameGrid(grids[0].frame_len_us, first.duration_cs, fused_occ)
    segments = segments_from_frames(fused_grid)
    fused = ClipTimeline.build(first.clip_id, FUSED_SOURCE, first.duration_s, segments)
    return fused.normalized(merge_gap_s, min_dur_s)


def fuse_corpus(
    per_detector: Sequence[dict[str, ClipTimeline]],
    rule: FusionRule,
    frame_len_s: float = DEFAULT_FRAME_LEN_S,
    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
    min_dur_s: float = DEFAULT_MIN_DUR_S,
) -> dict[str, ClipTimeline]:
    """Fuse a corpus given one {clip_id: timeline} mapping per detector."""
    if len(per_detector) != rule.k:
        raise FusionError(
            f"expected {rule.k} detector sets for K={rule.k}, got {len(per_detector)}"
        )
    clip_sets = [set(d) for d in per_detector]
    for clips in clip_sets[1:]:
        if clips != clip_sets[0]:
            missing = sorted(clip_sets[0] ^ clips)
            raise FusionError(f"detector sets disagree on clips: {missing}")
    return {
        clip_id: fuse(
            [d[clip_id] for d in per_detector], rule, frame_len_s, merge_gap_s, min_dur_s
        )
        for clip_id in sorted(clip_sets[0])
    }

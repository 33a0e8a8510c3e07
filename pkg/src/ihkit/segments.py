"""Canonical types and interval algebra for timestamped speech/music segments.

Timestamps are carried internally as integer hundredths of a second
(centiseconds), the native resolution of the annotation conventions this
toolkit follows.  All merging, gap and duration comparisons happen on
integers, so boundary cases like "gap exactly equal to the merge threshold"
are decided exactly rather than by float luck.

Frame-grid rasterization uses frame midpoints: a frame belongs to a segment
iff its midpoint does.  Midpoints are evaluated in exact integer microsecond
arithmetic so rasterization is deterministic for every frame length.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

CS_PER_SECOND = 100
US_PER_CS = 10_000
US_PER_SECOND = 1_000_000

# Shared segment conventions.  The annotation pipeline, fusion post-processing
# and the baseline detector all use these same constants.
TIME_RESOLUTION_S = 0.01
DEFAULT_MERGE_GAP_S = 0.15
DEFAULT_MIN_DUR_S = 0.20
DEFAULT_COLLAR_S = 0.05
DEFAULT_BETA = 0.5
DEFAULT_FRAME_LEN_S = 0.01


class SegmentError(ValueError):
    """Malformed segment data (bad interval, bad kind, bad score)."""


class JsonlError(ValueError):
    """Canonical segment JSONL that does not conform to the schema."""


def seconds_to_cs(value: float, what: str = "time") -> int:
    """Quantize a non-negative time in seconds to integer centiseconds."""
    value = float(value)
    if not math.isfinite(value):
        raise SegmentError(f"{what} must be finite, got {value!r}")
    if value < 0:
        raise SegmentError(f"{what} must be non-negative, got {value!r}")
    return int(round(value * CS_PER_SECOND))


def cs_to_seconds(cs: int) -> float:
    return cs / CS_PER_SECOND


class SegmentKind(str, Enum):
    SPEECH = "speech"
    MUSIC = "music"

    @classmethod
    def parse(cls, value: "SegmentKind | str") -> "SegmentKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise SegmentError(
                f"kind must be one of {[k.value for k in cls]}, got {value!r}"
            ) from None


BOTH_KINDS = frozenset((SegmentKind.SPEECH, SegmentKind.MUSIC))


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Half-abstract time span [start, end), stored in centiseconds."""

    start_cs: int
    end_cs: int

    def __post_init__(self) -> None:
        if not isinstance(self.start_cs, int) or not isinstance(self.end_cs, int):
            raise SegmentError("interval endpoints must be integer centiseconds")
        if self.start_cs < 0:
            raise SegmentError(f"interval start must be >= 0, got {self.start_cs}")
        if self.start_cs >= self.end_cs:
            raise SegmentError(
                f"interval start must precede end, got "
                f"[{self.start_cs}, {self.end_cs}] cs"
            )

    @classmethod
    def from_seconds(cls, start_s: float, end_s: float) -> "TimeInterval":
        return cls(seconds_to_cs(start_s, "start"), seconds_to_cs(end_s, "end"))

    @property
    def start_s(self) -> float:
        return cs_to_seconds(self.start_cs)

    @property
    def end_s(self) -> float:
        return cs_to_seconds(self.end_cs)

    @property
    def duration_cs(self) -> int:
        return self.end_cs - self.start_cs

    @property
    def duration_s(self) -> float:
        return cs_to_seconds(self.duration_cs)

    def overlaps(self, other: "TimeInterval") -> bool:
        """True when the overlap has positive measure (touching is not overlap)."""
        return self.start_cs < other.end_cs and other.start_cs < self.end_cs


@dataclass(frozen=True)
class EventSegment:
    """One detected/annotated speech-or-music span with optional confidence."""

    interval: TimeInterval
    kind: SegmentKind
    score: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SegmentKind.parse(self.kind))
        if self.score is not None:
            score = float(self.score)
            if not math.isfinite(score) or not 0.0 <= score <= 1.0:
                raise SegmentError(f"score must lie in [0, 1], got {self.score!r}")
            object.__setattr__(self, "score", score)

    @classmethod
    def build(
        cls,
        kind: SegmentKind | str,
        start_s: float,
        end_s: float,
        score: float | None = None,
    ) -> "EventSegment":
        return cls(TimeInterval.from_seconds(start_s, end_s), SegmentKind.parse(kind), score)

    def sort_key(self) -> tuple:
        return (self.kind.value, self.interval.start_cs, self.interval.end_cs)


def _merge_score(scores: list[float]) -> float | None:
    return max(scores) if scores else None


def normalize(
    segments: Sequence[EventSegment],
    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
    min_dur_s: float = DEFAULT_MIN_DUR_S,
    keep_short: set[int] | frozenset[int] | None = None,
) -> list[EventSegment]:
    """Merge close same-kind segments and drop residual fragments.

    Same-kind segments whose inter-gap is strictly below ``merge_gap_s`` are
    replaced by their convex hull (the gap is absorbed).  Merging runs first;
    afterwards any segment shorter than ``min_dur_s`` is dropped unless its
    input index (or the index of one of its constituents) is in
    ``keep_short``.  Output is sorted by (kind, start) and same-kind segments
    are pairwise disjoint.  Idempotent.
    """
    if merge_gap_s < 0:
        raise SegmentError(f"merge_gap_s must be >= 0, got {merge_gap_s}")
    if min_dur_s < 0:
        raise SegmentError(f"min_dur_s must be >= 0, got {min_dur_s}")
    merge_gap_cs = seconds_to_cs(merge_gap_s, "merge_gap_s")
    min_dur_cs = seconds_to_cs(min_dur_s, "min_dur_s")
    kept_ids = frozenset(keep_short or ())

    per_kind: dict[SegmentKind, list[tuple[int, EventSegment]]] = {}
    for index, segment in enumerate(segments):
        if not isinstance(segment, EventSegment):
            raise SegmentError(f"segment {index}: expected EventSegment, got {type(segment).__name__}")
        per_kind.setdefault(segment.kind, []).append((index, segment))

    out: list[EventSegment] = []
    for kind, indexed in per_kind.items():
        indexed.sort(key=lambda item: (item[1].interval.start_cs, item[1].interval.end_cs))
        groups: list[dict] = []
        for index, segment in indexed:
            interval = segment.interval
            if groups and interval.start_cs - groups[-1]["end"] < merge_gap_cs:
                group = groups[-1]
                group["end"] = max(group["end"], interval.end_cs)
                group["kept"] = group["kept"] or index in kept_ids
                if segment.score is not None:
                    group["scores"].append(segment.score)
            else:
                groups.append(
                    {
                        "start": interval.start_cs,
                        "end": interval.end_cs,
                        "kept": index in kept_ids,
                        "scores": [] if segment.score is None else [segment.score],
                    }
                )
        for group in groups:
            if group["end"] - group["start"] < min_dur_cs and not group["kept"]:
                continue
            out.append(
                EventSegment(
                    TimeInterval(group["start"], group["end"]),
                    kind,
                    _merge_score(group["scores"]),
                )
            )
    out.sort(key=EventSegment.sort_key)
    return out


def union_duration(
    segments: Sequence[EventSegment],
    kinds: Iterable[SegmentKind | str] | None = None,
) -> float:
    """Measure (in seconds) of the union of intervals whose kind is selected.

    Time covered by both a speech and a music segment is counted once.
    """
    selected = BOTH_KINDS if kinds is None else {SegmentKind.parse(k) for k in kinds}
    intervals = sorted(
        (s.interval.start_cs, s.interval.end_cs) for s in segments if s.kind in selected
    )
    total_cs = 0
    current: tuple[int, int] | None = None
    for start, end in intervals:
        if current is None:
            current = (start, end)
        elif start <= current[1]:
            current = (current[0], max(current[1], end))
        else:
            total_cs += current[1] - current[0]
            current = (start, end)
    if current is not None:
        total_cs += current[1] - current[0]
    return cs_to_seconds(total_cs)


def _ingest(
    segments: Iterable[EventSegment],
    duration_cs: int,
    clip_id: str,
    warnings: list[str] | None,
) -> tuple[EventSegment, ...]:
    """Clamp segments to [0, duration]; overshoot is common in detector output."""
    kept: list[EventSegment] = []
    for segment in segments:
        interval = segment.interval
        if interval.start_cs >= duration_cs:
            message = (
                f"clip {clip_id!r}: segment [{interval.start_s:.2f}, {interval.end_s:.2f}] "
                f"starts beyond clip duration {cs_to_seconds(duration_cs):.2f}; dropped"
            )
            log.warning(message)
            if warnings is not None:
                warnings.append(message)
            continue
        if interval.end_cs > duration_cs:
            message = (
                f"clip {clip_id!r}: segment end {interval.end_s:.2f} clamped to "
                f"clip duration {cs_to_seconds(duration_cs):.2f}"
            )
            log.warning(message)
            if warnings is not None:
                warnings.append(message)
            segment = EventSegment(
                TimeInterval(interval.start_cs, duration_cs), segment.kind, segment.score
            )
        kept.append(segment)
    kept.sort(key=EventSegment.sort_key)
    return tuple(kept)


@dataclass(frozen=True)
class ClipTimeline:
    """Per-clip, per-source set of segments plus the clip duration."""

    clip_id: str
    source: str
    duration_cs: int
    segments: tuple[EventSegment, ...]

    @classmethod
    def build(
        cls,
        clip_id: str,
        source: str,
        duration_s: float,
        segments: Iterable[EventSegment] = (),
        warnings: list[str] | None = None,
    ) -> "ClipTimeline":
        if not clip_id:
            raise SegmentError("clip_id must be non-empty")
        duration_cs = seconds_to_cs(duration_s, "duration_s")
        if duration_cs <= 0:
            raise SegmentError(f"duration_s must be positive, got {duration_s!r}")
        return cls(clip_id, source, duration_cs, _ingest(segments, duration_cs, clip_id, warnings))

    @property
    def duration_s(self) -> float:
        return cs_to_seconds(self.duration_cs)

    def kind_segments(self, kind: SegmentKind | str) -> tuple[EventSegment, ...]:
        kind = SegmentKind.parse(kind)
        return tuple(s for s in self.segments if s.kind == kind)

    def normalized(
        self,
        merge_gap_s: float = DEFAULT_MERGE_GAP_S,
        min_dur_s: float = DEFAULT_MIN_DUR_S,
        keep_short: set[int] | None = None,
    ) -> "ClipTimeline":
        merged = normalize(self.segments, merge_gap_s, min_dur_s, keep_short)
        return ClipTimeline(self.clip_id, self.source, self.duration_cs, tuple(merged))

    def replace(self, source: str | None = None) -> "ClipTimeline":
        return ClipTimeline(
            self.clip_id, source if source is not None else self.source,
            self.duration_cs, self.segments,
        )


# ---------------------------------------------------------------------------
# Frame grids
# ---------------------------------------------------------------------------


def _frame_len_us(frame_len_s: float) -> int:
    if not math.isfinite(frame_len_s) or frame_len_s <= 0:
        raise SegmentError(f"frame_len_s must be positive, got {frame_len_s!r}")
    frame_len_us = int(round(frame_len_s * US_PER_SECOND))
    if frame_len_us < US_PER_CS:
        raise SegmentError(
            f"frame_len_s below the {TIME_RESOLUTION_S} s time resolution: {frame_len_s!r}"
        )
    return frame_len_us


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class FrameGrid:
    """Boolean per-kind occupancy of a clip discretized into fixed frames."""

    frame_len_us: int
    duration_cs: int
    occupancy: Mapping[SegmentKind, np.ndarray]

    @property
    def n_frames(self) -> int:
        return _ceil_div(self.duration_cs * US_PER_CS, self.frame_len_us)

    @property
    def frame_len_s(self) -> float:
        return self.frame_len_us / US_PER_SECOND

    def kind_occupancy(self, kind: SegmentKind | str) -> np.ndarray:
        return self.occupancy[SegmentKind.parse(kind)]


def doubled_midpoints_us(frame_len_us: int, duration_cs: int) -> np.ndarray:
    """Twice the midpoint, in microseconds, of every (duration-clamped) frame.

    Working with doubled values keeps everything integral: frame midpoints sit
    at half-microsecond granularity once the final partial frame is clamped to
    the clip end.
    """
    duration_us = duration_cs * US_PER_CS
    n = _ceil_div(duration_us, frame_len_us)
    starts = np.arange(n, dtype=np.int64) * frame_len_us
    ends = np.minimum(starts + frame_len_us, duration_us)
    return starts + ends


def rasterize(timeline: ClipTimeline, frame_len_s: float = DEFAULT_FRAME_LEN_S) -> FrameGrid:
    """Discretize a timeline: frame f carries kind k iff f's midpoint is in a k-segment.

    Membership is half-open on the right (start <= midpoint < end) so touching
    segments never double-claim a frame.
    """
    frame_len_us = _frame_len_us(frame_len_s)
    m2 = doubled_midpoints_us(frame_len_us, timeline.duration_cs)
    occupancy: dict[SegmentKind, np.ndarray] = {}
    for kind in SegmentKind:
        occ = np.zeros(m2.shape[0], dtype=bool)
        for segment in timeline.kind_segments(kind):
            start2 = 2 * segment.interval.start_cs * US_PER_CS
            end2 = 2 * segment.interval.end_cs * US_PER_CS
            occ |= (m2 >= start2) & (m2 < end2)
        occupancy[kind] = occ
    return FrameGrid(frame_len_us, timeline.duration_cs, occupancy)


def segments_from_frames(grid: FrameGrid) -> list[EventSegment]:
    """Turn maximal runs of occupied frames back into segments.

    Run [i, j] becomes [i * frame_len, min((j + 1) * frame_len, duration)].
    Endpoints are quantized to centiseconds; because frame lengths are at
    least one centisecond, quantization can never move a boundary past a
    frame midpoint, so rasterize(segments_from_frames(g)) == g.
    """
    duration_us = grid.duration_cs * US_PER_CS
    out: list[EventSegment] = []
    for kind in SegmentKind:
        occ = grid.occupancy[kind]
        if not occ.any():
            continue
        padded = np.diff(occ.astype(np.int8), prepend=0, append=0)
        run_starts = np.flatnonzero(padded == 1)
        run_ends = np.flatnonzero(padded == -1)  # exclusive frame index
        for i, j in zip(run_starts, run_ends):
            start_us = int(i) * grid.frame_len_us
            end_us = min(int(j) * grid.frame_len_us, duration_us)
            start_cs = int(round(start_us / US_PER_CS))
            end_cs = int(round(end_us / US_PER_CS))
            if end_cs > start_cs:
                out.append(EventSegment(TimeInterval(start_cs, end_cs), kind))
    out.sort(key=EventSegment.sort_key)
    return out


# ---------------------------------------------------------------------------
# Canonical segment JSONL
# ---------------------------------------------------------------------------

JSONL_FIELDS = ("clip_id", "source", "kind", "start_s", "end_s", "score")


@dataclass(frozen=True)
class SegmentRecord:
    """One line of canonical segment JSONL."""

    clip_id: str
    source: str
    segment: EventSegment


def record_to_json(record: SegmentRecord) -> str:
    payload = {
        "clip_id": record.clip_id,
        "source": record.source,
        "kind": record.segment.kind.value,
        "start_s": record.segment.interval.start_s,
        "end_s": record.segment.interval.end_s,
        "score": record.segment.score,
    }
    return json.dumps(payload, ensure_ascii=True)


def timeline_records(timeline: ClipTimeline) -> list[SegmentRecord]:
    return [SegmentRecord(timeline.clip_id, timeline.source, s) for s in timeline.segments]


def write_segments_jsonl(path, timelines: Iterable[ClipTimeline]) -> int:
    """Write timelines as canonical JSONL, sorted by (clip_id, kind, start)."""
    records: list[SegmentRecord] = []
    for timeline in timelines:
        records.extend(timeline_records(timeline))
    records.sort(key=lambda r: (r.clip_id, r.source) + r.segment.sort_key())
    with open(path, "w", encoding="ascii") as handle:
        for record in records:
            handle.write(record_to_json(record) + "\n")
    return len(records)


def parse_segment_record(obj: object, lineno: int) -> SegmentRecord:
    if not isinstance(obj, dict):
        raise JsonlError(f"line {lineno}: expected a JSON object")
    missing = [f for f in JSONL_FIELDS[:-1] if f not in obj]
    if missing:
        raise JsonlError(f"line {lineno}: missing fields {missing}")
    clip_id = obj["clip_id"]
    source = obj["source"]
    if not isinstance(clip_id, str) or not clip_id:
        raise JsonlError(f"line {lineno}: clip_id must be a non-empty string")
    if not isinstance(source, str) or not source:
        raise JsonlError(f"line {lineno}: source must be a non-empty string")
    for field in ("start_s", "end_s"):
        value = obj[field]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise JsonlError(f"line {lineno}: {field} must be a number")
        if math.isnan(value) or math.isinf(value):
            raise JsonlError(f"line {lineno}: {field} must be finite, got {value!r}")
        if value < 0:
            raise JsonlError(f"line {lineno}: {field} must be non-negative, got {value!r}")
    score = obj.get("score")
    if score is not None and (not isinstance(score, (int, float)) or isinstance(score, bool)):
        raise JsonlError(f"line {lineno}: score must be a number or null")
    try:
        segment = EventSegment.build(obj["kind"], obj["start_s"], obj["end_s"], score)
    except SegmentError as exc:
        raise JsonlError(f"line {lineno}: {exc}") from None
    return SegmentRecord(clip_id, source, segment)


def read_segment_records(path) -> list[SegmentRecord]:
    records: list[SegmentRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(parse_segment_record(obj, lineno))
    return records


def group_timelines(
    records: Iterable[SegmentRecord],
    durations: Mapping[str, float],
    source: str | None = None,
    warnings: list[str] | None = None,
) -> dict[str, ClipTimeline]:
    """Group flat records into one timeline per clip.

    ``durations`` defines the clip universe: every clip it names gets a
    timeline (possibly empty), and records for unknown clips are an error.
    When ``source`` is given, all records must carry it.
    """
    by_clip: dict[str, list[SegmentRecord]] = {clip_id: [] for clip_id in durations}
    for record in records:
        if record.clip_id not in by_clip:
            raise JsonlError(f"clip {record.clip_id!r} not present in the manifest")
        if source is not None and record.source != source:
            raise JsonlError(
                f"clip {record.clip_id!r}: expected source {source!r}, got {record.source!r}"
            )
        by_clip[record.clip_id].append(record)
    out: dict[str, ClipTimeline] = {}
    for clip_id, clip_records in by_clip.items():
        record_source = source
        if record_source is None:
            sources = {r.source for r in clip_records}
            if len(sources) > 1:
                raise JsonlError(f"clip {clip_id!r} mixes sources {sorted(sources)}")
            record_source = sources.pop() if sources else "unknown"
        out[clip_id] = ClipTimeline.build(
            clip_id,
            record_source,
            durations[clip_id],
            (r.segment for r in clip_records),
            warnings=warnings,
        )
    return out

"""Human-annotation pipeline: schema/consistency validation, cross-annotator
comparison, aggregation, and export in the canonical line-record schema.

Export field order is fixed: clip_id, model, sublabel, segment_type, start,
end — with timestamps rendered at exactly two decimals.  Aggregation merges
same-type segments separated by gaps under 0.15 s and drops fragments under
0.2 s unless an adjudicator explicitly kept them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .segments import (
    DEFAULT_MERGE_GAP_S,
    DEFAULT_MIN_DUR_S,
    CS_PER_SECOND,
    SegmentKind,
    seconds_to_cs,
)

EXPORT_FIELDS = ("clip_id", "model", "sublabel", "segment_type", "start", "end")
RAW_FIELDS = EXPORT_FIELDS + ("annotator", "keep_short", "version")
DEFAULT_IOU_FLOOR = 0.5
_RESOLUTION_TOL = 1e-6


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    """One human-labeled segment; start/end in seconds at 0.01 resolution."""

    clip_id: str
    model: str
    sublabel: str
    segment_type: str
    start: float
    end: float
    annotator: str = ""
    keep_short: bool = False
    version: int = 0

    @property
    def start_cs(self) -> int:
        return int(round(self.start * CS_PER_SECOND))

    @property
    def end_cs(self) -> int:
        return int(round(self.end * CS_PER_SECOND))


@dataclass(frozen=True)
class QcFinding:
    clip_id: str
    message: str

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "message": self.message}


@dataclass
class QcReport:
    schema_errors: list[QcFinding] = field(default_factory=list)
    consistency_errors: list[QcFinding] = field(default_factory=list)
    flag_agreement: dict[str, bool] = field(default_factory=dict)
    segment_iou: dict[str, float] = field(default_factory=dict)
    adjudication_required: list[str] = field(default_factory=list)
    iou_floor: float = DEFAULT_IOU_FLOOR

    @property
    def ok(self) -> bool:
        return not self.schema_errors and not self.consistency_errors

    def to_dict(self) -> dict:
        return {
            "schema_errors": [f.to_dict() for f in self.schema_errors],
            "consistency_errors": [f.to_dict() for f in self.consistency_errors],
            "flag_agreement": dict(sorted(self.flag_agreement.items())),
            "segment_iou": {k: round(v, 4) for k, v in sorted(self.segment_iou.items())},
            "adjudication_required": sorted(self.adjudication_required),
            "iou_floor": self.iou_floor,
        }


def _schema_messages(record: AnnotationRecord) -> list[str]:
    messages: list[str] = []
    if not record.clip_id:
        messages.append("clip_id is empty")
    if record.segment_type not in (k.value for k in SegmentKind):
        messages.append(f"segment_type must be speech or music, got {record.segment_type!r}")
    for name, value in (("start", record.start), ("end", record.end)):
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            messages.append(f"{name} must be a finite number, got {value!r}")
            continue
        if value < 0:
            messages.append(f"{name} must be non-negative, got {value}")
        if abs(value * CS_PER_SECOND - round(value * CS_PER_SECOND)) > _RESOLUTION_TOL:
            messages.append(f"{name}={value} is not a multiple of 0.01 s")
    if not messages and record.start >= record.end:
        messages.append(f"start must precede end, got [{record.start}, {record.end}]")
    return messages


def validate_records(records: Sequence[AnnotationRecord]) -> QcReport:
    """Schema and consistency checks; all findings land in the report.

    Consistency covers exact duplicates and same-type overlaps within one
    (clip, annotator) — overlapping identical types cannot survive the merge
    rule, so their presence marks an annotation mistake.
    """
    report = QcReport()
    valid: list[tuple[int, AnnotationRecord]] = []
    for index, record in enumerate(records):
        messages = _schema_messages(record)
        for message in messages:
            report.schema_errors.append(QcFinding(record.clip_id, f"record {index}: {message}"))
        if not messages:
            valid.append((index, record))

    seen: dict[tuple, int] = {}
    for index, record in valid:
        key = (record.clip_id, record.annotator, record.segment_type, record.start_cs, record.end_cs)
        if key in seen:
            report.consistency_errors.append(
                QcFinding(record.clip_id, f"record {index}: duplicate of record {seen[key]}")
            )
        else:
            seen[key] = index

    groups: dict[tuple, list[tuple[int, AnnotationRecord]]] = {}
    for index, record in valid:
        groups.setdefault((record.clip_id, record.annotator, record.segment_type), []).append(
            (index, record)
        )
    for (clip_id, _annotator, segment_type), members in groups.items():
        members.sort(key=lambda item: (item[1].start_cs, item[1].end_cs))
        for (i, a), (j, b) in zip(members, members[1:]):
            if b.start_cs < a.end_cs:
                report.consistency_errors.append(
                    QcFinding(
                        clip_id,
                        f"records {i} and {j}: overlapping {segment_type} segments "
                        f"[{a.start:.2f}, {a.end:.2f}] and [{b.start:.2f}, {b.end:.2f}]",
                    )
                )
    return report


def _clip_union_cs(records: Iterable[AnnotationRecord], kind: str) -> list[tuple[int, int]]:
    spans = sorted((r.start_cs, r.end_cs) for r in records if r.segment_type == kind)
    merged: list[list[int]] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def _overlap_cs(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    total = 0
    for s1, e1 in a:
        for s2, e2 in b:
            total += max(0, min(e1, e2) - max(s1, s2))
    return total


def compare_annotators(
    a: Sequence[AnnotationRecord],
    b: Sequence[AnnotationRecord],
    iou_floor: float = DEFAULT_IOU_FLOOR,
) -> QcReport:
    """Clip-level flag agreement and segment-level IoU between two annotators.

    Flags agree when both marked the clip or both left it empty.  IoU pools
    speech and music intersection/union time; clips failing either test land
    in the adjudication queue.  Symmetric in its arguments.
    """
    report = QcReport(iou_floor=iou_floor)
    by_clip_a: dict[str, list[AnnotationRecord]] = {}
    by_clip_b: dict[str, list[AnnotationRecord]] = {}
    for record in a:
        by_clip_a.setdefault(record.clip_id, []).append(record)
    for record in b:
        by_clip_b.setdefault(record.clip_id, []).append(record)

    for clip_id in sorted(set(by_clip_a) | set(by_clip_b)):
        records_a = by_clip_a.get(clip_id, [])
        records_b = by_clip_b.get(clip_id, [])
        agreement = bool(records_a) == bool(records_b)
        report.flag_agreement[clip_id] = agreement

        intersection = 0
        union = 0
        for kind in SegmentKind:
            ua = _clip_union_cs(records_a, kind.value)
            ub = _clip_union_cs(records_b, kind.value)
            overlap = _overlap_cs(ua, ub)
            len_a = sum(e - s for s, e in ua)
            len_b = sum(e - s for s, e in ub)
            intersection += overlap
            union += len_a + len_b - overlap
        iou = intersection / union if union else 1.0
        report.segment_iou[clip_id] = iou

        if not agreement or iou < iou_floor:
            report.adjudication_required.append(clip_id)
    return report


def aggregate(
    records: Sequence[AnnotationRecord],
    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
    min_dur_s: float = DEFAULT_MIN_DUR_S,
) -> list[AnnotationRecord]:
    """Merge close same-type segments and drop residual fragments.

    Gap strictly below ``merge_gap_s`` merges into the covering span; merged
    fragments shorter than ``min_dur_s`` are dropped unless any constituent
    carries keep_short.  Deterministic and idempotent.
    """
    report = validate_records(records)
    if report.schema_errors:
        first = report.schema_errors[0]
        raise AnnotationError(
            f"cannot aggregate unvalidated records "
            f"({len(report.schema_errors)} schema errors; first: {first.message})"
        )
    merge_gap_cs = seconds_to_cs(merge_gap_s, "merge_gap_s")
    min_dur_cs = seconds_to_cs(min_dur_s, "min_dur_s")

    groups: dict[tuple, list[AnnotationRecord]] = {}
    for record in records:
        key = (record.clip_id, record.model, record.sublabel, record.annotator, record.segment_type)
        groups.setdefault(key, []).append(record)

    out: list[AnnotationRecord] = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda r: (r.start_cs, r.end_cs))
        merged: list[dict] = []
        for record in members:
            if merged and record.start_cs - merged[-1]["end"] < merge_gap_cs:
                merged[-1]["end"] = max(merged[-1]["end"], record.end_cs)
                merged[-1]["keep_short"] = merged[-1]["keep_short"] or record.keep_short
                merged[-1]["version"] = max(merged[-1]["version"], record.version)
            else:
                merged.append(
                    {
                        "start": record.start_cs,
                        "end": record.end_cs,
                        "keep_short": record.keep_short,
                        "version": record.version,
                        "template": record,
                    }
                )
        for group in merged:
            if group["end"] - group["start"] < min_dur_cs and not group["keep_short"]:
                continue
            out.append(
                replace(
                    group["template"],
                    start=group["start"] / CS_PER_SECOND,
                    end=group["end"] / CS_PER_SECOND,
                    keep_short=group["keep_short"],
                    version=group["version"],
                )
            )
    out.sort(key=_export_key)
    return out


def _export_key(record: AnnotationRecord) -> tuple:
    return (record.clip_id, record.segment_type, record.start_cs, record.end_cs, record.annotator)


def export(records: Sequence[AnnotationRecord], format: str = "jsonl") -> bytes:
    """Render records in the canonical export schema, stably sorted.

    Timestamps are printed with exactly two decimals; JSONL objects keep the
    schema field order, so export -> parse -> export round-trips byte-exactly.
    """
    ordered = sorted(records, key=_export_key)
    if format == "jsonl":
        lines = []
        for r in ordered:
            lines.append(
                "{"
                f'"clip_id": {json.dumps(r.clip_id)}, '
                f'"model": {json.dumps(r.model)}, '
                f'"sublabel": {json.dumps(r.sublabel)}, '
                f'"segment_type": {json.dumps(r.segment_type)}, '
                f'"start": {r.start:.2f}, "end": {r.end:.2f}'
                "}"
            )
        return ("".join(line + "\n" for line in lines)).encode("utf-8")
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(EXPORT_FIELDS)
        for r in ordered:
            writer.writerow(
                [r.clip_id, r.model, r.sublabel, r.segment_type, f"{r.start:.2f}", f"{r.end:.2f}"]
            )
        return buffer.getvalue().encode("utf-8")
    raise AnnotationError(f"unknown export format {format!r}; use jsonl or csv")


def parse_export(data: bytes, format: str = "jsonl") -> list[AnnotationRecord]:
    """Parse a previous export back into records (annotator metadata is gone)."""
    text = data.decode("utf-8")
    records: list[AnnotationRecord] = []
    if format == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(_record_from_mapping(obj, lineno))
        return records
    if format == "csv":
        reader = csv.DictReader(io.StringIO(text))
        for lineno, row in enumerate(reader, start=2):
            records.append(_record_from_mapping(row, lineno, numeric_strings=True))
        return records
    raise AnnotationError(f"unknown export format {format!r}; use jsonl or csv")


def _record_from_mapping(obj: dict, lineno: int, numeric_strings: bool = False) -> AnnotationRecord:
    try:
        start, end = obj["start"], obj["end"]
        if numeric_strings:
            start, end = float(start), float(end)
        return AnnotationRecord(
            clip_id=str(obj["clip_id"]),
            model=str(obj.get("model", "")),
            sublabel=str(obj.get("sublabel", "")),
            segment_type=str(obj["segment_type"]),
            start=start,
            end=end,
            annotator=str(obj.get("annotator", "")),
            keep_short=bool(obj.get("keep_short", False)),
            version=int(obj.get("version", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"line {lineno}: malformed record ({exc})") from None


def write_raw_jsonl(path, records: Sequence[AnnotationRecord]) -> None:
    """Raw annotation JSONL: export fields plus annotator/keep_short/version."""
    with open(path, "w", encoding="utf-8") as handle:
        for r in sorted(records, key=_export_key):
            handle.write(
                json.dumps(
                    {
                        "clip_id": r.clip_id,
                        "model": r.model,
                        "sublabel": r.sublabel,
                        "segment_type": r.segment_type,
                        "start": round(r.start, 2),
                        "end": round(r.end, 2),
                        "annotator": r.annotator,
                        "keep_short": r.keep_short,
                        "version": r.version,
                    }
                )
                + "\n"
            )


def read_raw_jsonl(path) -> list[AnnotationRecord]:
    records: list[AnnotationRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(_record_from_mapping(obj, lineno))
    return records

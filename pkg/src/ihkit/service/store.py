"""File-backed annotation store: append-only event log plus snapshots.

Every accepted write appends one JSON event and bumps the session version by
exactly one; replaying the log reconstructs the latest state, so the log
doubles as the versioned edit history.  Writes are serialized through a
process-wide lock with compare-and-set on the session version, which is all
the coordination a desk-scale corpus needs.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from ..annotation import AnnotationRecord, validate_records
from ..metrics import ClipMeta
from ..segments import CS_PER_SECOND, SegmentKind

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "snapshot.json"


class StoreError(Exception):
    pass


class UnknownClip(StoreError):
    pass


class VersionConflict(StoreError):
    def __init__(self, current_version: int):
        super().__init__(f"version conflict; current version is {current_version}")
        self.current_version = current_version


class SessionSubmitted(StoreError):
    pass


class SegmentValidation(StoreError):
    def __init__(self, messages: Sequence[str]):
        super().__init__("; ".join(messages))
        self.messages = list(messages)


@dataclass
class SessionState:
    clip_id: str
    annotator: str
    version: int = 0
    segments: list[dict] = field(default_factory=list)
    submitted: bool = False
    edit_log: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "annotator": self.annotator,
            "version": self.version,
            "segments": self.segments,
            "submitted": self.submitted,
            "edit_log": self.edit_log,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SessionState":
        return cls(
            clip_id=obj["clip_id"],
            annotator=obj["annotator"],
            version=obj["version"],
            segments=list(obj.get("segments", [])),
            submitted=obj.get("submitted", False),
            edit_log=list(obj.get("edit_log", [])),
        )


def check_segments(segments: Sequence[Mapping]) -> tuple[list[dict], list[str], list[str]]:
    """Server-side re-validation of incoming segments.

    Returns (cleaned segments, hard errors, warnings).  Same-type overlap is a
    warning only; the interface warns but does not block.
    """
    errors: list[str] = []
    warnings: list[str] = []
    cleaned: list[dict] = []
    kinds = {k.value for k in SegmentKind}
    for index, segment in enumerate(segments):
        kind = segment.get("segment_type")
        start = segment.get("start")
        end = segment.get("end")
        if kind not in kinds:
            errors.append(f"segments[{index}].segment_type: must be speech or music, got {kind!r}")
            continue
        bad = False
        for name, value in (("start", start), ("end", end)):
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                errors.append(f"segments[{index}].{name}: must be a finite number")
                bad = True
            elif value < 0:
                errors.append(f"segments[{index}].{name}: must be non-negative, got {value}")
                bad = True
            elif abs(value * CS_PER_SECOND - round(value * CS_PER_SECOND)) > 1e-6:
                errors.append(f"segments[{index}].{name}: {value} is not a multiple of 0.01 s")
                bad = True
        if bad:
            continue
        if start >= end:
            errors.append(f"segments[{index}]: start must precede end, got [{start}, {end}]")
            continue
        cleaned.append(
            {
                "segment_type": kind,
                "start": round(float(start), 2),
                "end": round(float(end), 2),
                "keep_short": bool(segment.get("keep_short", False)),
            }
        )
    by_kind: dict[str, list[dict]] = {}
    for segment in cleaned:
        by_kind.setdefault(segment["segment_type"], []).append(segment)
    for kind, members in by_kind.items():
        members = sorted(members, key=lambda s: (s["start"], s["end"]))
        for a, b in zip(members, members[1:]):
            if b["start"] < a["end"]:
                warnings.append(
                    f"overlapping {kind} segments [{a['start']:.2f}, {a['end']:.2f}] "
                    f"and [{b['start']:.2f}, {b['end']:.2f}]"
                )
    return cleaned, errors, warnings


class AnnotationStore:
    def __init__(self, root, manifest: Sequence[ClipMeta], snapshot_interval: int = 100):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = {meta.clip_id: meta for meta in manifest}
        self.snapshot_interval = snapshot_interval
        self._lock = threading.Lock()
        self._sessions: dict[tuple[str, str], SessionState] = {}
        self._adjudicated: dict[str, dict] = {}
        self._seq = 0
        self._events_since_snapshot = 0
        self._recover()
        self._events_handle = open(self.root / EVENTS_FILE, "a", encoding="utf-8")

    # -- recovery ----------------------------------------------------------

    def _recover(self) -> None:
        snapshot_path = self.root / SNAPSHOT_FILE
        if snapshot_path.exists():
            snapshot = json.loads(snapshot_path.read_text(encoding="utf-8"))
            self._seq = snapshot["last_seq"]
            for obj in snapshot["sessions"]:
                state = SessionState.from_dict(obj)
                self._sessions[(state.clip_id, state.annotator)] = state
            self._adjudicated = dict(snapshot.get("adjudicated", {}))
        events_path = self.root / EVENTS_FILE
        if events_path.exists():
            with open(events_path, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    if event["seq"] > self._seq:
                        self._apply(event)
                        self._seq = event["seq"]

    def _apply(self, event: dict) -> None:
        op = event["op"]
        if op == "put":
            state = self._session(event["clip_id"], event["annotator"])
            state.version = event["version"]
            state.segments = list(event["segments"])
            state.edit_log.append(event.get("edit") or "replace")
        elif op == "submit":
            state = self._session(event["clip_id"], event["annotator"])
            state.submitted = True
        elif op == "adjudicate":
            self._adjudicated[event["clip_id"]] = {
                "adjudicator": event["annotator"],
                "segments": list(event["segments"]),
            }

    def _session(self, clip_id: str, annotator: str) -> SessionState:
        key = (clip_id, annotator)
        if key not in self._sessions:
            self._sessions[key] = SessionState(clip_id, annotator)
        return self._sessions[key]

    # -- persistence -------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        self._events_handle.write(json.dumps(event, ensure_ascii=True) + "\n")
        self._events_handle.flush()
        os.fsync(self._events_handle.fileno())
        self._events_since_snapshot += 1
        if self._events_since_snapshot >= self.snapshot_interval:
            self._write_snapshot()

    def _write_snapshot(self) -> None:
        snapshot = {
            "last_seq": self._seq,
            "sessions": [s.to_dict() for s in self._sessions.values()],
            "adjudicated": self._adjudicated,
        }
        tmp_path = self.root / (SNAPSHOT_FILE + ".tmp")
        tmp_path.write_text(json.dumps(snapshot, ensure_ascii=True), encoding="utf-8")
        os.replace(tmp_path, self.root / SNAPSHOT_FILE)
        self._events_since_snapshot = 0

    def close(self) -> None:
        self._events_handle.close()

    # -- operations ----------------------------------------------------------

    def _require_clip(self, clip_id: str) -> ClipMeta:
        if clip_id not in self.manifest:
            raise UnknownClip(f"unknown clip {clip_id!r}")
        return self.manifest[clip_id]

    def get_session(self, clip_id: str, annotator: str) -> SessionState:
        """Consistent read-only copy of the current session state."""
        self._require_clip(clip_id)
        with self._lock:
            state = self._sessions.get((clip_id, annotator))
            if state is not None:
                return SessionState.from_dict(state.to_dict())
        return SessionState(clip_id, annotator)

    def put_annotations(
        self,
        clip_id: str,
        annotator: str,
        expected_version: int,
        segments: Sequence[Mapping],
        edit: str | None = None,
    ) -> tuple[int, list[str]]:
        """Compare-and-set write; returns (new version, warnings)."""
        self._require_clip(clip_id)
        cleaned, errors, warnings = check_segments(segments)
        if errors:
            raise SegmentValidation(errors)
        with self._lock:
            state = self._session(clip_id, annotator)
            if state.submitted:
                raise SessionSubmitted(f"session {clip_id}/{annotator} is submitted")
            if state.version != expected_version:
                raise VersionConflict(state.version)
            self._seq += 1
            state.version += 1
            state.segments = cleaned
            state.edit_log.append(edit or "replace")
            self._append_event(
                {
                    "seq": self._seq,
                    "op": "put",
                    "clip_id": clip_id,
                    "annotator": annotator,
                    "version": state.version,
                    "segments": cleaned,
                    "edit": edit or "replace",
                    "ts": _now(),
                }
            )
            return state.version, warnings

    def submit(self, clip_id: str, annotator: str) -> list[AnnotationRecord]:
        self._require_clip(clip_id)
        with self._lock:
            state = self._session(clip_id, annotator)
            if state.submitted:
                raise SessionSubmitted(f"session {clip_id}/{annotator} is already submitted")
            records = self._records_for(state)
            report = validate_records(records)
            if report.schema_errors:
                raise SegmentValidation([f.message for f in report.schema_errors])
            self._seq += 1
            state.submitted = True
            self._append_event(
                {
                    "seq": self._seq,
                    "op": "submit",
                    "clip_id": clip_id,
                    "annotator": annotator,
                    "version": state.version,
                    "segments": state.segments,
                    "ts": _now(),
                }
            )
            return records

    def adjudicate(self, clip_id: str, adjudicator: str, segments: Sequence[Mapping]) -> list[AnnotationRecord]:
        """Store the adjudicated consensus set; never touches annotator sessions."""
        self._require_clip(clip_id)
        cleaned, errors, _warnings = check_segments(segments)
        if errors:
            raise SegmentValidation(errors)
        with self._lock:
            self._seq += 1
            self._adjudicated[clip_id] = {"adjudicator": adjudicator, "segments": cleaned}
            self._append_event(
                {
                    "seq": self._seq,
                    "op": "adjudicate",
                    "clip_id": clip_id,
                    "annotator": adjudicator,
                    "version": 0,
                    "segments": cleaned,
                    "ts": _now(),
                }
            )
            return self.adjudicated_records(clip_id)

    # -- record views --------------------------------------------------------

    def _records_for(self, state: SessionState) -> list[AnnotationRecord]:
        meta = self.manifest[state.clip_id]
        return [
            AnnotationRecord(
                clip_id=state.clip_id,
                model=meta.model,
                sublabel=meta.sublabel,
                segment_type=s["segment_type"],
                start=s["start"],
                end=s["end"],
                annotator=state.annotator,
                keep_short=s.get("keep_short", False),
                version=state.version,
            )
            for s in state.segments
        ]

    def submitted_records(self) -> list[AnnotationRecord]:
        with self._lock:
            out: list[AnnotationRecord] = []
            for state in self._sessions.values():
                if state.submitted:
                    out.extend(self._records_for(state))
            return out

    def adjudicated_records(self, clip_id: str | None = None) -> list[AnnotationRecord]:
        out: list[AnnotationRecord] = []
        items = self._adjudicated.items()
        for cid, entry in items:
            if clip_id is not None and cid != clip_id:
                continue
            meta = self.manifest[cid]
            for s in entry["segments"]:
                out.append(
                    AnnotationRecord(
                        clip_id=cid,
                        model=meta.model,
                        sublabel=meta.sublabel,
                        segment_type=s["segment_type"],
                        start=s["start"],
                        end=s["end"],
                        annotator=entry["adjudicator"],
                        keep_short=s.get("keep_short", False),
                    )
                )
        return out

    def annotators_with_submission(self) -> list[str]:
        with self._lock:
            return sorted({s.annotator for s in self._sessions.values() if s.submitted})

    def submitted_by_annotator(self) -> dict[str, list[AnnotationRecord]]:
        with self._lock:
            out: dict[str, list[AnnotationRecord]] = {}
            for state in self._sessions.values():
                if state.submitted:
                    out.setdefault(state.annotator, []).extend(self._records_for(state))
            return out

    def submitted_clips(self, annotator: str) -> set[str]:
        with self._lock:
            return {
                s.clip_id
                for s in self._sessions.values()
                if s.submitted and s.annotator == annotator
            }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()

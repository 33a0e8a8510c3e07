"""Shared adapter machinery: class maps, thresholding, segment assembly, and
canonical-JSONL emission with schema validation.

Each adapter translates its engine's native output (labeled segments or
per-frame class scores) through an editable class map into speech/music
events, normalizes them with the shared merge/min-duration conventions, and
writes canonical segment JSONL.  A frame or segment survives thresholding
iff its score is strictly above the threshold, so threshold 1.0 yields empty
output from any clip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ihkit.segments import (
    ClipTimeline,
    EventSegment,
    group_timelines,
    read_segment_records,
    write_segments_jsonl,
)

DETECTOR_NAMES = ("ina", "yamnet", "panns")
CLASS_TARGETS = ("speech", "music", "ignore")
DEFAULT_KEY = "__default__"


class AdapterError(Exception):
    pass


class MissingAssetError(AdapterError):
    """A model asset or inference engine is absent; message names it."""


@dataclass(frozen=True)
class AdapterSpec:
    detector_name: str
    score_threshold: float
    class_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.detector_name not in DETECTOR_NAMES:
            raise AdapterError(
                f"detector_name must be one of {DETECTOR_NAMES}, got {self.detector_name!r}"
            )
        if not 0.0 <= self.score_threshold <= 1.0:
            raise AdapterError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        for native, target in self.class_map.items():
            if target not in CLASS_TARGETS:
                raise AdapterError(
                    f"class_map[{native!r}] must map to one of {CLASS_TARGETS}, got {target!r}"
                )

    def target_for(self, native_label: str) -> str:
        """speech/music/ignore for a native class; every emittable class must resolve."""
        if native_label in self.class_map:
            return self.class_map[native_label]
        if DEFAULT_KEY in self.class_map:
            return self.class_map[DEFAULT_KEY]
        raise AdapterError(
            f"native class {native_label!r} is not covered by the {self.detector_name} "
            f"class map and no {DEFAULT_KEY} entry exists"
        )

    def classes_for(self, target: str, class_names: Sequence[str]) -> list[int]:
        return [i for i, name in enumerate(class_names) if self.target_for(name) == target]


def load_class_map(path) -> dict[str, str]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise AdapterError(f"{path}: class map must be a JSON object")
    return {str(k): str(v) for k, v in obj.items()}


def bundled_class_map(detector_name: str) -> dict[str, str]:
    data = resources.files("ih_adapters").joinpath(f"class_maps/{detector_name}.json")
    return {str(k): str(v) for k, v in json.loads(data.read_text(encoding="utf-8")).items()}


def default_spec(detector_name: str, score_threshold: float | None = None) -> AdapterSpec:
    # documented defaults; operating points are adapter config, not dogma
    thresholds = {"ina": 0.0, "yamnet": 0.3, "panns": 0.3}
    return AdapterSpec(
        detector_name=detector_name,
        score_threshold=thresholds[detector_name] if score_threshold is None else score_threshold,
        class_map=bundled_class_map(detector_name),
    )


def segments_from_labeled_spans(
    spans: Iterable[tuple[str, float, float]], spec: AdapterSpec
) -> list[EventSegment]:
    """Map (native_label, start_s, end_s) spans; unscored spans count as 1.0."""
    out: list[EventSegment] = []
    for label, start_s, end_s in spans:
        target = spec.target_for(str(label))
        if target == "ignore":
            continue
        if 1.0 <= spec.score_threshold:
            continue
        if end_s > start_s:
            out.append(EventSegment.build(target, float(start_s), float(end_s)))
    return out


def segments_from_frame_scores(
    scores: np.ndarray,
    class_names: Sequence[str],
    frame_hop_s: float,
    frame_len_s: float,
    spec: AdapterSpec,
) -> list[EventSegment]:
    """Threshold per-frame class scores and turn passing runs into segments.

    Frame k covers [k * hop, k * hop + frame_len]; a frame passes for a kind
    when the maximum score over that kind's native classes exceeds the
    threshold.  Scores carry into the segment as the run maximum.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != len(class_names):
        raise AdapterError(
            f"scores must be (frames, {len(class_names)}), got {scores.shape}"
        )
    if frame_hop_s <= 0 or frame_len_s <= 0:
        raise AdapterError("frame_hop_s and frame_len_s must be positive")
    out: list[EventSegment] = []
    for kind in ("speech", "music"):
        columns = spec.classes_for(kind, class_names)
        if not columns:
            continue
        kind_scores = scores[:, columns].max(axis=1)
        passing = kind_scores > spec.score_threshold
        for i, j in _runs(passing):
            start_s = i * frame_hop_s
            end_s = j * frame_hop_s + frame_len_s
            score = float(np.clip(kind_scores[i : j + 1].max(), 0.0, 1.0))
            out.append(EventSegment.build(kind, start_s, end_s, score))
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    if mask.size == 0:
        return []
    edges = np.diff(mask.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def emit_timeline(
    clip_id: str,
    source: str,
    duration_s: float,
    segments: Sequence[EventSegment],
    out_path,
) -> ClipTimeline:
    """Normalize, write canonical JSONL, and re-validate through the parser.

    Raises when the written file does not round-trip with zero warnings; the
    adapter CLIs exit non-zero in that case.
    """
    timeline = ClipTimeline.build(clip_id, source, duration_s, segments).normalized()
    write_segments_jsonl(out_path, [timeline])
    warnings: list[str] = []
    records = read_segment_records(out_path)
    group_timelines(records, {clip_id: duration_s}, source=source, warnings=warnings)
    if warnings:
        raise AdapterError(f"{out_path}: schema warnings on round-trip: {warnings}")
    return timeline


def run_adapter_cli(argv, detector_name: str, infer, description: str) -> int:
    """Shared CLI: audio in, JSONL out, threshold flag, optional replay input."""
    import argparse
    import sys

    parser = argparse.ArgumentParser(prog=f"ih-adapter-{detector_name}", description=description)
    parser.add_argument("audio", help="input audio file")
    parser.add_argument("out", help="output canonical segment JSONL")
    parser.add_argument("--threshold", type=float, default=None, help="score threshold")
    parser.add_argument("--class-map", default=None, help="override class map JSON")
    parser.add_argument(
        "--native-json",
        default=None,
        help="replay a recorded native output instead of running live inference",
    )
    args = parser.parse_args(argv)
    from ihkit.audio import AudioError

    try:
        spec = default_spec(detector_name, args.threshold)
        if args.class_map:
            spec = AdapterSpec(detector_name, spec.score_threshold, load_class_map(args.class_map))
        native = (
            json.loads(Path(args.native_json).read_text(encoding="utf-8"))
            if args.native_json
            else infer(args.audio)
        )
        from . import ina, panns, yamnet  # local import to avoid cycles

        module = {"ina": ina, "yamnet": yamnet, "panns": panns}[detector_name]
        clip_id = Path(args.audio).stem
        module.to_timeline(native, spec, clip_id, args.out)
    except (AdapterError, AudioError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0

"""Adapter for the CNN speech/music segmenter that emits labeled spans.

Native output: a list of (label, start_s, end_s) tuples with labels from
{speech, music, noise, noEnergy, male, female}.  Spans carry no scores, so
they count as confidence 1.0 against the threshold.
"""

from __future__ import annotations

from .common import (
    AdapterSpec,
    MissingAssetError,
    emit_timeline,
    run_adapter_cli,
    segments_from_labeled_spans,
)

SOURCE = "ina"


def infer(audio_path) -> dict:
    """Run live segmentation; needs the optional engine and its CNN weights."""
    try:
        from inaSpeechSegmenter import Segmenter
    except ImportError:
        raise MissingAssetError(
            "inaSpeechSegmenter is not installed; install the 'ina' extra "
            "(pip install ih-adapters[ina]) to pull the package and its bundled "
            "keras CNN weights"
        ) from None
    segmenter = Segmenter(vad_engine="smn", detect_gender=False)
    spans = [(label, float(start), float(end)) for label, start, end in segmenter(str(audio_path))]
    duration_s = max((end for _, _, end in spans), default=0.0)
    return {"spans": spans, "duration_s": duration_s}


def to_timeline(native: dict, spec: AdapterSpec, clip_id: str, out_path):
    spans = [tuple(entry) for entry in native["spans"]]
    segments = segments_from_labeled_spans(spans, spec)
    return emit_timeline(clip_id, SOURCE, float(native["duration_s"]), segments, out_path)


def main(argv=None) -> int:
    return run_adapter_cli(argv, "ina", infer, __doc__)


if __name__ == "__main__":
    raise SystemExit(main())

"""Adapter for the AudioSet CNN classifier that scores 0.96 s windows.

Native output: per-frame class scores at a 0.48 s hop over the published
521-class vocabulary, plus the class-name list.
"""

from __future__ import annotations

import numpy as np

from .common import (
    AdapterSpec,
    MissingAssetError,
    emit_timeline,
    run_adapter_cli,
    segments_from_frame_scores,
)

SOURCE = "yamnet"
FRAME_HOP_S = 0.48
FRAME_LEN_S = 0.96
MODEL_HANDLE = "https://tfhub.dev/google/yamnet/1"


def infer(audio_path) -> dict:
    try:
        import tensorflow as tf
        import tensorflow_hub as hub
    except ImportError:
        raise MissingAssetError(
            "tensorflow / tensorflow_hub are not installed; install the 'yamnet' "
            "extra (pip install ih-adapters[yamnet])"
        ) from None
    try:
        model = hub.load(MODEL_HANDLE)
    except Exception as exc:
        raise MissingAssetError(
            f"cannot load the hub model {MODEL_HANDLE}: {exc}; download it once "
            "with network access or point TFHUB_CACHE_DIR at a local copy"
        ) from None
    from ihkit.audio import load_wav

    rate, samples = load_wav(audio_path)
    if rate != 16000:
        raise MissingAssetError("this engine expects 16 kHz mono input; resample first")
    scores, _embeddings, _spectrogram = model(tf.constant(samples, dtype=tf.float32))
    class_map_path = model.class_map_path().numpy().decode()
    class_names = _read_class_names(class_map_path)
    return {
        "frame_hop_s": FRAME_HOP_S,
        "frame_len_s": FRAME_LEN_S,
        "class_names": class_names,
        "scores": np.asarray(scores).tolist(),
        "duration_s": len(samples) / rate,
    }


def _read_class_names(csv_path: str) -> list[str]:
    import csv

    with open(csv_path, newline="", encoding="utf-8") as handle:
        return [row["display_name"] for row in csv.DictReader(handle)]


def to_timeline(native: dict, spec: AdapterSpec, clip_id: str, out_path):
    segments = segments_from_frame_scores(
        np.asarray(native["scores"], dtype=np.float64),
        list(native["class_names"]),
        float(native["frame_hop_s"]),
        float(native["frame_len_s"]),
        spec,
    )
    return emit_timeline(clip_id, SOURCE, float(native["duration_s"]), segments, out_path)


def main(argv=None) -> int:
    return run_adapter_cli(argv, "yamnet", infer, __doc__)


if __name__ == "__main__":
    raise SystemExit(main())

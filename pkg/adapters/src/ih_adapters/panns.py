"""Adapter for the large pretrained audio-tagging network with frame-wise
sound-event output over the 527-class AudioSet vocabulary."""

from __future__ import annotations

import numpy as np

from .common import (
    AdapterSpec,
    MissingAssetError,
    emit_timeline,
    run_adapter_cli,
    segments_from_frame_scores,
)

SOURCE = "panns"
FRAME_HOP_S = 0.01  # framewise output of the SED head


def infer(audio_path) -> dict:
    try:
        from panns_inference import SoundEventDetection, labels
    except ImportError:
        raise MissingAssetError(
            "panns_inference is not installed; install the 'panns' extra "
            "(pip install ih-adapters[panns]); first use downloads the SED "
            "checkpoint into ~/panns_data/"
        ) from None
    from ihkit.audio import load_wav

    rate, samples = load_wav(audio_path)
    if rate != 32000:
        raise MissingAssetError("this engine expects 32 kHz mono input; resample first")
    try:
        sed = SoundEventDetection(checkpoint_path=None, device="cpu")
    except Exception as exc:
        raise MissingAssetError(
            f"cannot load the sound-event-detection checkpoint: {exc}; expected "
            "under ~/panns_data/"
        ) from None
    framewise = sed.inference(samples[None, :])[0]
    return {
        "frame_hop_s": FRAME_HOP_S,
        "frame_len_s": FRAME_HOP_S,
        "class_names": list(labels),
        "scores": np.asarray(framewise).tolist(),
        "duration_s": len(samples) / rate,
    }


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
    return run_adapter_cli(argv, "panns", infer, __doc__)


if __name__ == "__main__":
    raise SystemExit(main())

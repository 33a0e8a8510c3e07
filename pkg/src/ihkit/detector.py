"""Deterministic heuristic speech/music detector over PCM audio.

Stands in for heavyweight neural detectors so the end-to-end pipeline is
testable at desk scale.  Per hop it computes:

  - frame RMS, gated relative to the clip's loudest frame;
  - spectral flatness over the 100-4000 Hz band (tonal vs. noise-like);
  - harmonicity: peak of the normalized autocorrelation in the lag range of
    80-500 Hz fundamentals;
  - syllabic modulation: the fraction of envelope power in the 2-8 Hz band
    over a sliding context window.

Active frames become music when flatness and harmonicity agree, and speech
when the modulation threshold fires on a frame not already claimed as music.
Per-kind decisions are median-filtered, converted to segments, and
normalized with the shared merge/min-duration conventions.  Every feature is
a ratio, so output is invariant to global gain changes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import butter, medfilt, sosfiltfilt

from .audio import AudioError, load_wav
from .segments import (
    DEFAULT_MERGE_GAP_S,
    DEFAULT_MIN_DUR_S,
    ClipTimeline,
    EventSegment,
)

BASELINE_SOURCE = "baseline"

_FLATNESS_EPS = 1e-12
_BAND_LO_HZ = 100.0
_BAND_HI_HZ = 4000.0
_PITCH_LO_HZ = 80.0
_PITCH_HI_HZ = 500.0
_MOD_LO_HZ = 2.0
_MOD_HI_HZ = 8.0
_MOD_CONTEXT_S = 0.7
_MIN_FRAMES_FOR_MODULATION = 40


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    frame_len_s: float = 0.025
    hop_s: float = 0.010
    music_flatness_max: float = 0.25
    music_harmonicity_min: float = 0.55
    speech_mod_min: float = 0.50
    energy_floor_db: float = -45.0
    median_filter_frames: int = 5
    merge_gap_s: float = DEFAULT_MERGE_GAP_S
    min_dur_s: float = DEFAULT_MIN_DUR_S

    def __post_init__(self) -> None:
        if self.frame_len_s <= 0 or self.hop_s <= 0:
            raise DetectorError("frame_len_s and hop_s must be positive")
        if self.hop_s > self.frame_len_s:
            raise DetectorError(
                f"hop_s ({self.hop_s}) must not exceed frame_len_s ({self.frame_len_s})"
            )
        if self.median_filter_frames < 1 or self.median_filter_frames % 2 == 0:
            raise DetectorError("median_filter_frames must be a positive odd count")
        if self.energy_floor_db >= 0:
            raise DetectorError("energy_floor_db must be negative (relative to clip peak)")
        for name in ("music_flatness_max", "music_harmonicity_min", "speech_mod_min"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DetectorError(f"{name} must lie strictly inside (0, 1), got {value}")

    def to_dict(self) -> dict:
        return {
            "frame_len_s": self.frame_len_s,
            "hop_s": self.hop_s,
            "music_flatness_max": self.music_flatness_max,
            "music_harmonicity_min": self.music_harmonicity_min,
            "speech_mod_min": self.speech_mod_min,
            "energy_floor_db": self.energy_floor_db,
            "median_filter_frames": self.median_filter_frames,
            "merge_gap_s": self.merge_gap_s,
            "min_dur_s": self.min_dur_s,
        }


def perturbed_configs(base: DetectorConfig | None = None) -> list[DetectorConfig]:
    """Three deliberately different parameterizations for ensemble runs."""
    base = base or DetectorConfig()
    return [
        base,
        replace(
            base,
            frame_len_s=0.020,
            music_flatness_max=base.music_flatness_max * 1.12,
            music_harmonicity_min=base.music_harmonicity_min * 0.92,
            speech_mod_min=base.speech_mod_min * 0.9,
            energy_floor_db=base.energy_floor_db + 3.0,
        ),
        replace(
            base,
            frame_len_s=0.030,
            median_filter_frames=base.median_filter_frames + 2,
            music_flatness_max=base.music_flatness_max * 0.88,
            music_harmonicity_min=min(0.99, base.music_harmonicity_min * 1.08),
            speech_mod_min=base.speech_mod_min * 1.1,
            energy_floor_db=base.energy_floor_db - 3.0,
        ),
    ]


def _frame_signal(samples: np.ndarray, win_n: int, hop_n: int) -> np.ndarray:
    n_frames = -(-samples.size // hop_n)
    padded_len = (n_frames - 1) * hop_n + win_n
    padded = np.zeros(padded_len, dtype=np.float64)
    padded[: samples.size] = samples
    view = np.lib.stride_tricks.sliding_window_view(padded, win_n)
    return view[::hop_n][:n_frames]


def _spectral_flatness(power: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    band = (freqs >= _BAND_LO_HZ) & (freqs <= _BAND_HI_HZ)
    p = power[:, band]
    totals = p.sum(axis=1, keepdims=True)
    safe = totals[:, 0] > 0
    normalized = np.divide(p, totals, out=np.full_like(p, 1.0 / p.shape[1]), where=totals > 0)
    geometric = np.exp(np.mean(np.log(normalized + _FLATNESS_EPS), axis=1))
    arithmetic = normalized.mean(axis=1) + _FLATNESS_EPS
    flatness = geometric / arithmetic
    flatness[~safe] = 1.0
    return flatness


def _harmonicity(windowed: np.ndarray, rate: int, win_n: int) -> np.ndarray:
    nfft = 1 << (2 * win_n - 1).bit_length()
    spectrum = np.fft.rfft(windowed, nfft, axis=1)
    autocorr = np.fft.irfft(np.abs(spectrum) ** 2, nfft, axis=1)[:, :win_n]
    zero_lag = autocorr[:, 0].copy()
    zero_lag[zero_lag <= 0] = 1.0
    normalized = autocorr / zero_lag[:, None]
    lag_lo = max(1, int(np.ceil(rate / _PITCH_HI_HZ)))
    lag_hi = min(win_n - 1, int(np.floor(rate / _PITCH_LO_HZ)))
    if lag_hi < lag_lo:
        return np.zeros(windowed.shape[0])
    harm = normalized[:, lag_lo : lag_hi + 1].max(axis=1)
    harm[autocorr[:, 0] <= 0] = 0.0
    return harm


def _modulation(env: np.ndarray, hop_s: float, max_rms: float) -> np.ndarray:
    n = env.size
    if n < _MIN_FRAMES_FOR_MODULATION or max_rms <= 0:
        return np.zeros(n)
    fs_env = 1.0 / hop_s
    sos = butter(2, [_MOD_LO_HZ, _MOD_HI_HZ], btype="bandpass", fs=fs_env, output="sos")
    band = sosfiltfilt(sos, env)
    context = int(round(_MOD_CONTEXT_S / hop_s)) | 1
    kernel = np.ones(min(context, n)) / min(context, n)
    local_mean = np.convolve(env, kernel, mode="same")
    local_band_power = np.convolve(band * band, kernel, mode="same")
    return np.sqrt(np.maximum(local_band_power, 0.0)) / (local_mean + 1e-9 * max_rms)


def analyze(
    samples: np.ndarray,
    rate: int,
    config: DetectorConfig | None = None,
    clip_id: str = "clip",
    source: str = BASELINE_SOURCE,
) -> ClipTimeline:
    """Run the heuristic detector over a mono waveform.

    Deterministic for fixed input and config.
    """
    config = config or DetectorConfig()
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise AudioError(f"expected mono audio, got shape {samples.shape}")
    if samples.size == 0:
        raise AudioError("empty audio")

    win_n = int(round(config.frame_len_s * rate))
    hop_n = int(round(config.hop_s * rate))
    if win_n < 2 or hop_n < 1:
        raise DetectorError("analysis window too short for this sample rate")

    frames = _frame_signal(samples, win_n, hop_n)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    max_rms = float(rms.max())
    active = rms > max_rms * 10.0 ** (config.energy_floor_db / 20.0)

    window = np.hanning(win_n)
    windowed = frames * window[None, :]
    nfft = 1 << (win_n - 1).bit_length()
    power = np.abs(np.fft.rfft(windowed, nfft, axis=1)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / rate)

    flatness = _spectral_flatness(power, freqs)
    harmonicity = _harmonicity(windowed, rate, win_n)
    modulation = _modulation(rms, config.hop_s, max_rms)

    music = active & (flatness <= config.music_flatness_max) & (
        harmonicity >= config.music_harmonicity_min
    )
    speech = active & (modulation >= config.speech_mod_min) & ~music

    music = _median_filter(music, config.median_filter_frames)
    speech = _median_filter(speech, config.median_filter_frames)

    duration_s = samples.size / rate
    center_offset_n = (win_n - hop_n) / 2.0
    segments: list[EventSegment] = []
    for kind, decisions in (("speech", speech), ("music", music)):
        for i, j in _runs(decisions):
            start_s = max(0.0, (i * hop_n + center_offset_n) / rate)
            end_s = min(duration_s, ((j + 1) * hop_n + center_offset_n) / rate)
            if end_s > start_s:
                segments.append(EventSegment.build(kind, start_s, end_s))

    timeline = ClipTimeline.build(clip_id, source, duration_s, segments)
    return timeline.normalized(config.merge_gap_s, config.min_dur_s)


def analyze_file(
    path,
    config: DetectorConfig | None = None,
    clip_id: str | None = None,
    source: str = BASELINE_SOURCE,
) -> ClipTimeline:
    rate, samples = load_wav(path)
    if clip_id is None:
        clip_id = Path(path).stem
    return analyze(samples, rate, config, clip_id=clip_id, source=source)


def _median_filter(decisions: np.ndarray, kernel: int) -> np.ndarray:
    if kernel <= 1 or decisions.size == 0:
        return decisions
    kernel = min(kernel, decisions.size if decisions.size % 2 else decisions.size - 1)
    if kernel <= 1:
        return decisions
    return medfilt(decisions.astype(np.float64), kernel_size=kernel) > 0.5


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (first, last) index pairs."""
    if mask.size == 0:
        return []
    edges = np.diff(mask.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))

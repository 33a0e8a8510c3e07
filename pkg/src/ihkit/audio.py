"""WAV ingest and deterministic signal synthesis helpers.

Ingest accepts mono RIFF/WAVE files holding 16-bit integer or 32-bit float
PCM at 16/44.1/48 kHz; anything else is rejected rather than silently
converted.  Synthesis is seeded and reproducible, used by the mock audio
generator and by test fixtures.
"""

from __future__ import annotations

import hashlib
import io

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, sosfiltfilt

SUPPORTED_RATES = (16000, 44100, 48000)


class AudioError(ValueError):
    pass


def load_wav(source) -> tuple[int, np.ndarray]:
    """Read a mono WAV file (path, file object, or bytes) to float64 in [-1, 1]."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    try:
        rate, data = wavfile.read(source)
    except ValueError as exc:
        raise AudioError(f"unreadable WAV: {exc}") from None
    if rate not in SUPPORTED_RATES:
        raise AudioError(f"unsupported sample rate {rate}; expected one of {SUPPORTED_RATES}")
    if data.ndim != 1:
        raise AudioError(f"expected mono audio, got {data.shape[1]} channels")
    if data.size == 0:
        raise AudioError("empty audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioError(
            f"unsupported sample format {data.dtype}; only 16-bit int and 32-bit float PCM"
        )
    return rate, samples


def dump_wav(rate: int, samples: np.ndarray) -> bytes:
    """Serialize float samples as a 32-bit float WAV, byte-deterministic."""
    buffer = io.BytesIO()
    wavfile.write(buffer, rate, samples.astype(np.float32))
    return buffer.getvalue()


def save_wav(path, rate: int, samples: np.ndarray) -> None:
    with open(path, "wb") as handle:
        handle.write(dump_wav(rate, samples))


def seed_from(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def silence(duration_s: float, rate: int) -> np.ndarray:
    return np.zeros(int(round(duration_s * rate)), dtype=np.float64)


def add_tone(
    samples: np.ndarray,
    rate: int,
    start_s: float,
    end_s: float,
    freq_hz: float = 440.0,
    amplitude: float = 0.3,
    fade_s: float = 0.01,
) -> np.ndarray:
    """Mix a faded sine burst into [start, end]; returns the same array."""
    i0 = int(round(start_s * rate))
    i1 = min(int(round(end_s * rate)), samples.size)
    n = i1 - i0
    if n <= 0:
        return samples
    t = np.arange(n) / rate
    burst = amplitude * np.sin(2 * np.pi * freq_hz * t)
    burst *= _fade_envelope(n, rate, fade_s)
    samples[i0:i1] += burst
    return samples


def add_speechlike_noise(
    samples: np.ndarray,
    rate: int,
    start_s: float,
    end_s: float,
    amplitude: float = 0.3,
    mod_hz: float = 4.0,
    seed: int = 0,
    fade_s: float = 0.01,
) -> np.ndarray:
    """Mix band-limited noise with deep syllable-rate amplitude modulation.

    The carrier is 300-3000 Hz filtered white noise; the envelope swings the
    full depth at ``mod_hz`` so the 2-8 Hz modulation signature is strong.
    """
    i0 = int(round(start_s * rate))
    i1 = min(int(round(end_s * rate)), samples.size)
    n = i1 - i0
    if n <= 0:
        return samples
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    sos = butter(4, [300.0, 3000.0], btype="bandpass", fs=rate, output="sos")
    carrier = sosfiltfilt(sos, noise)
    peak = np.max(np.abs(carrier))
    if peak > 0:
        carrier = carrier / peak
    t = np.arange(n) / rate
    envelope = 0.5 * (1.0 - np.cos(2 * np.pi * mod_hz * t))
    burst = amplitude * carrier * envelope
    burst *= _fade_envelope(n, rate, fade_s)
    samples[i0:i1] += burst
    return samples


def add_white_noise(
    samples: np.ndarray,
    rate: int,
    start_s: float,
    end_s: float,
    rms_dbfs: float = -20.0,
    seed: int = 0,
) -> np.ndarray:
    i0 = int(round(start_s * rate))
    i1 = min(int(round(end_s * rate)), samples.size)
    n = i1 - i0
    if n <= 0:
        return samples
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    noise *= 10.0 ** (rms_dbfs / 20.0)
    samples[i0:i1] += noise
    return samples


def _fade_envelope(n: int, rate: int, fade_s: float) -> np.ndarray:
    envelope = np.ones(n)
    fade_n = min(int(round(fade_s * rate)), n // 2)
    if fade_n > 0:
        ramp = np.linspace(0.0, 1.0, fade_n, endpoint=False)
        envelope[:fade_n] = ramp
        envelope[-fade_n:] = ramp[::-1]
    return envelope

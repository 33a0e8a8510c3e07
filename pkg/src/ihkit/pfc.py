"""Two-pass posterior feature correction orchestrator.

Pass 0 asks the generator for unmasked audio and runs hallucination
detection on it.  If hallucinated spans are found, a mask schedule over the
generator's feature-time grid is built and one corrected generation is
requested with those intervals masked; what the masked features are replaced
with is the generator's own concern.  The orchestrator only ever transmits
intervals, keeping it model-agnostic.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from . import audio
from .metrics import ClipIhResult, ClipMeta, evaluate_clip
from .segments import ClipTimeline, EventSegment, SegmentError, TimeInterval

DetectFn = Callable[[str, bytes], ClipTimeline]


class PfcError(RuntimeError):
    pass


class GeneratorError(PfcError):
    """Generator call failed; ``retriable`` marks transient transport faults."""

    def __init__(self, message: str, pass_index: int, retriable: bool = False):
        super().__init__(f"pass {pass_index}: {message}")
        self.pass_index = pass_index
        self.retriable = retriable


class DetectionError(PfcError):
    """Detector failure mid-run; ``partial`` preserves what completed."""

    def __init__(self, message: str, partial: "PfcOutcome | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class MaskSchedule:
    """Feature-time intervals to mask, plus the exact frame indices they hit.

    Frame f (covering [f/rate, (f+1)/rate)) is masked iff it overlaps the
    interval union with positive measure.
    """

    clip_id: str
    feature_rate_hz: float
    intervals: tuple[TimeInterval, ...]
    masked_frames: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "feature_rate_hz": self.feature_rate_hz,
            "intervals": [
                {"start_s": iv.start_s, "end_s": iv.end_s} for iv in self.intervals
            ],
            "masked_frames": list(self.masked_frames),
        }


def merge_intervals(intervals: Sequence[TimeInterval]) -> tuple[TimeInterval, ...]:
    """Union of intervals as a sorted, pairwise-disjoint tuple."""
    if not intervals:
        return ()
    ordered = sorted(intervals, key=lambda iv: (iv.start_cs, iv.end_cs))
    merged = [[ordered[0].start_cs, ordered[0].end_cs]]
    for interval in ordered[1:]:
        if interval.start_cs <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], interval.end_cs)
        else:
            merged.append([interval.start_cs, interval.end_cs])
    return tuple(TimeInterval(lo, hi) for lo, hi in merged)


def build_mask(
    hallucinations: Sequence[EventSegment],
    feature_rate_hz: float,
    duration_s: float,
    clip_id: str = "",
) -> MaskSchedule:
    """Build the mask schedule for the union of hallucinated spans.

    Exact rational arithmetic decides frame membership, so rates like 12.5 Hz
    cannot suffer float boundary drift.
    """
    if not math.isfinite(feature_rate_hz) or feature_rate_hz <= 0:
        raise SegmentError(f"feature_rate_hz must be positive, got {feature_rate_hz!r}")
    duration = Fraction(str(round(float(duration_s), 6)))
    if duration <= 0:
        raise SegmentError(f"duration_s must be positive, got {duration_s!r}")
    rate = Fraction(str(round(float(feature_rate_hz), 6)))
    intervals = merge_intervals([segment.interval for segment in hallucinations])
    n_frames = math.ceil(duration * rate)

    masked: list[int] = []
    for interval in intervals:
        start = Fraction(interval.start_cs, 100)
        end = Fraction(interval.end_cs, 100)
        # f/rate < end  and  (f+1)/rate > start, i.e. positive-measure overlap
        first = math.floor(start * rate - 1) + 1
        last_excl = math.ceil(end * rate)
        first = max(first, 0)
        last_excl = min(last_excl, n_frames)
        masked.extend(range(first, last_excl))
    return MaskSchedule(clip_id, feature_rate_hz, intervals, tuple(sorted(set(masked))))


@dataclass(frozen=True)
class GeneratorRequest:
    clip_id: str
    media_uri: str
    mask_intervals: tuple[TimeInterval, ...]
    pass_index: int

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "media_uri": self.media_uri,
            "mask_intervals": [
                {"start_s": iv.start_s, "end_s": iv.end_s} for iv in self.mask_intervals
            ],
            "pass_index": self.pass_index,
        }


@dataclass(frozen=True)
class GeneratorResponse:
    audio_wav: bytes
    feature_rate_hz: float
    version: str


class GeneratorClient(Protocol):
    def generate(self, request: GeneratorRequest) -> GeneratorResponse: ...


class HttpGeneratorClient:
    """Client for the JSON-over-HTTP generation protocol.

    POST {base_url}/generate with the request body; the response carries the
    audio either inline (``audio_wav_b64``) or by reference (``audio_uri``).
    """

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout_s: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout_s)

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        try:
            response = self._client.post(f"{self.base_url}/generate", json=request.to_dict())
        except httpx.TimeoutException as exc:
            raise GeneratorError(f"generator timeout: {exc}", request.pass_index, retriable=True)
        except httpx.TransportError as exc:
            raise GeneratorError(f"generator unreachable: {exc}", request.pass_index, retriable=True)
        if response.status_code != 200:
            raise GeneratorError(
                f"generator returned HTTP {response.status_code}", request.pass_index,
                retriable=response.status_code >= 500,
            )
        try:
            payload = response.json()
        except ValueError:
            raise GeneratorError("generator response is not JSON", request.pass_index)
        return self._parse(payload, request.pass_index)

    def _parse(self, payload: object, pass_index: int) -> GeneratorResponse:
        if not isinstance(payload, dict):
            raise GeneratorError("generator response must be a JSON object", pass_index)
        rate = payload.get("feature_rate_hz")
        if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
            raise GeneratorError(f"invalid feature_rate_hz {rate!r}", pass_index)
        version = payload.get("version")
        if not isinstance(version, str):
            raise GeneratorError("missing generator version tag", pass_index)
        if "audio_wav_b64" in payload:
            try:
                wav = base64.b64decode(payload["audio_wav_b64"], validate=True)
            except (TypeError, ValueError):
                raise GeneratorError("invalid base64 audio payload", pass_index)
        elif "audio_uri" in payload:
            wav = self._fetch_uri(payload["audio_uri"], pass_index)
        else:
            raise GeneratorError("response carries neither audio_wav_b64 nor audio_uri", pass_index)
        return GeneratorResponse(wav, float(rate), version)

    def _fetch_uri(self, uri: object, pass_index: int) -> bytes:
        if not isinstance(uri, str) or not uri:
            raise GeneratorError(f"invalid audio_uri {uri!r}", pass_index)
        if uri.startswith("file://"):
            path = uri[len("file://"):]
            try:
                with open(path, "rb") as handle:
                    return handle.read()
            except OSError as exc:
                raise GeneratorError(f"cannot read {uri}: {exc}", pass_index)
        if uri.startswith(("http://", "https://")):
            try:
                response = self._client.get(uri)
            except httpx.TransportError as exc:
                raise GeneratorError(f"cannot fetch {uri}: {exc}", pass_index, retriable=True)
            if response.status_code != 200:
                raise GeneratorError(f"HTTP {response.status_code} fetching {uri}", pass_index)
            return response.content
        raise GeneratorError(f"unsupported audio_uri scheme: {uri}", pass_index)


# ---------------------------------------------------------------------------
# In-process mock generators (identical contract, used by tests and the CLI)
# ---------------------------------------------------------------------------


class CleanMockGenerator:
    """Generator that never hallucinates: returns the same base audio always."""

    version = "mock-clean-1"

    def __init__(self, duration_s: float = 10.0, rate: int = 16000, feature_rate_hz: float = 25.0):
        self.duration_s = duration_s
        self.rate = rate
        self.feature_rate_hz = feature_rate_hz
        self.calls = 0

    def _base(self, clip_id: str) -> np.ndarray:
        return audio.silence(self.duration_s, self.rate)

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        self.calls += 1
        wav = audio.dump_wav(self.rate, self._base(request.clip_id))
        return GeneratorResponse(wav, self.feature_rate_hz, self.version)


class HallucinatingMockGenerator(CleanMockGenerator):
    """Deterministically hallucinates speech-like audio on a fixed span.

    The hallucination appears on every subinterval of the span not covered by
    the request's mask intervals, which makes one corrective pass with a
    correct detector sufficient to remove it.
    """

    version = "mock-halluc-1"

    def __init__(
        self,
        span: tuple[float, float] = (2.0, 4.0),
        duration_s: float = 10.0,
        rate: int = 16000,
        feature_rate_hz: float = 25.0,
    ):
        super().__init__(duration_s, rate, feature_rate_hz)
        self.span = span

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        self.calls += 1
        samples = self._base(request.clip_id)
        seed = audio.seed_from("halluc", request.clip_id)
        for start_s, end_s in self._uncovered(request.mask_intervals):
            audio.add_speechlike_noise(samples, self.rate, start_s, end_s, seed=seed)
        wav = audio.dump_wav(self.rate, samples)
        return GeneratorResponse(wav, self.feature_rate_hz, self.version)

    def _uncovered(self, mask: Sequence[TimeInterval]) -> list[tuple[float, float]]:
        lo, hi = self.span
        pieces = [(lo, hi)]
        for interval in sorted(mask, key=lambda iv: iv.start_cs):
            next_pieces: list[tuple[float, float]] = []
            for ps, pe in pieces:
                if interval.end_s <= ps or interval.start_s >= pe:
                    next_pieces.append((ps, pe))
                    continue
                if interval.start_s > ps:
                    next_pieces.append((ps, interval.start_s))
                if interval.end_s < pe:
                    next_pieces.append((interval.end_s, pe))
            pieces = next_pieces
        return [(ps, pe) for ps, pe in pieces if pe - ps > 1e-9]


@dataclass
class PfcOutcome:
    clip_id: str
    before: ClipIhResult
    after: ClipIhResult
    schedules: tuple[MaskSchedule, ...]
    generator_calls: int
    initial_audio: bytes
    final_audio: bytes
    generator_version: str

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "before": {"is_ih": self.before.is_ih, "d_s": self.before.d_s, "t_s": self.before.t_s},
            "after": {"is_ih": self.after.is_ih, "d_s": self.after.d_s, "t_s": self.after.t_s},
            "generator_calls": self.generator_calls,
            "corrective_passes": len(self.schedules),
            "masked_intervals": [
                [{"start_s": iv.start_s, "end_s": iv.end_s} for iv in s.intervals]
                for s in self.schedules
            ],
            "generator_version": self.generator_version,
        }


def run_pfc(
    meta: ClipMeta,
    generator: GeneratorClient,
    detect: DetectFn,
    passes: int = 1,
    media_uri: str = "",
) -> PfcOutcome:
    """Detect-then-correct loop for one clip.

    Pass 0 generates unmasked audio and detects hallucinated spans; when none
    are found the loop stops and the initial audio stands.  Each corrective
    pass masks the union of every span detected so far and regenerates.  At
    most ``1 + passes`` generator calls are issued.
    """
    if passes < 1:
        raise PfcError(f"passes must be >= 1, got {passes}")
    if meta.in_ysm:
        raise PfcError(
            f"clip {meta.clip_id!r} carries a speech/music ground-truth label; "
            "correction only targets evaluable clips"
        )
    media_uri = media_uri or f"clip://{meta.clip_id}"

    response = generator.generate(GeneratorRequest(meta.clip_id, media_uri, (), 0))
    feature_rate = response.feature_rate_hz
    if feature_rate <= 0:
        raise GeneratorError(f"invalid feature_rate_hz {feature_rate!r}", 0)
    before = _detect_result(meta, detect, response.audio_wav, partial=None)

    outcome = PfcOutcome(
        clip_id=meta.clip_id,
        before=before.result,
        after=before.result,
        schedules=(),
        generator_calls=1,
        initial_audio=response.audio_wav,
        final_audio=response.audio_wav,
        generator_version=response.version,
    )
    detected: list[EventSegment] = list(before.timeline.segments)
    schedules: list[MaskSchedule] = []

    for pass_index in range(1, passes + 1):
        if not detected or outcome.after.d_s <= 0:
            break
        schedule = build_mask(detected, feature_rate, meta.duration_s, meta.clip_id)
        schedules.append(schedule)
        request = GeneratorRequest(meta.clip_id, media_uri, schedule.intervals, pass_index)
        response = generator.generate(request)
        if abs(response.feature_rate_hz - feature_rate) > 1e-9:
            raise GeneratorError(
                f"feature_rate_hz changed across passes: {feature_rate} -> "
                f"{response.feature_rate_hz}",
                pass_index,
            )
        outcome.generator_calls += 1
        outcome.final_audio = response.audio_wav
        outcome.schedules = tuple(schedules)
        outcome.generator_version = response.version
        corrected = _detect_result(meta, detect, response.audio_wav, partial=outcome)
        outcome.after = corrected.result
        detected.extend(corrected.timeline.segments)

    outcome.schedules = tuple(schedules)
    return outcome


@dataclass
class _Detection:
    timeline: ClipTimeline
    result: ClipIhResult


def _detect_result(
    meta: ClipMeta, detect: DetectFn, wav: bytes, partial: PfcOutcome | None
) -> _Detection:
    try:
        timeline = detect(meta.clip_id, wav)
    except Exception as exc:
        raise DetectionError(f"detector failed on clip {meta.clip_id!r}: {exc}", partial) from exc
    return _Detection(timeline, evaluate_clip(meta, timeline))

import base64

import httpx
import pytest
from fastapi import FastAPI
from fastapi.testclient import TestClient

from conftest import seg
from ihkit.audio import dump_wav, load_wav, silence
from ihkit.detector import analyze
from ihkit.metrics import ClipMeta
from ihkit.pfc import (
    CleanMockGenerator,
    DetectionError,
    GeneratorError,
    GeneratorRequest,
    HallucinatingMockGenerator,
    HttpGeneratorClient,
    PfcError,
    build_mask,
    merge_intervals,
    run_pfc,
)
from ihkit.segments import SegmentError, TimeInterval


def detect_with_baseline(clip_id: str, wav: bytes):
    rate, samples = load_wav(wav)
    return analyze(samples, rate, clip_id=clip_id, source="fused")


def meta(clip_id="clip", duration_s=10.0, in_ysm=False):
    return ClipMeta(clip_id, "vacuum cleaner", in_ysm, duration_s)


class TestBuildMask:
    def test_eight_hz_frames_for_unit_interval(self):
        schedule = build_mask([seg("speech", 2.0, 3.0)], 8.0, 10.0)
        assert schedule.masked_frames == tuple(range(16, 24))

    def test_empty_hallucinations_empty_schedule(self):
        schedule = build_mask([], 8.0, 10.0)
        assert schedule.masked_frames == ()
        assert schedule.intervals == ()

    def test_overlapping_spans_union(self):
        schedule = build_mask([seg("speech", 1.0, 2.0), seg("music", 1.5, 2.5)], 4.0, 10.0)
        assert [(iv.start_s, iv.end_s) for iv in schedule.intervals] == [(1.0, 2.5)]

    def test_fractional_rate_exact(self):
        # 12.5 Hz frames are 0.08 s; [0.08, 0.16) is exactly frame 1
        schedule = build_mask([seg("speech", 0.08, 0.16)], 12.5, 1.0)
        assert schedule.masked_frames == (1,)

    def test_frames_clamped_to_duration(self):
        schedule = build_mask([seg("speech", 9.5, 10.0)], 8.0, 10.0)
        assert max(schedule.masked_frames) == 79

    def test_rejects_non_positive_rate(self):
        with pytest.raises(SegmentError):
            build_mask([], 0.0, 10.0)
        with pytest.raises(SegmentError):
            build_mask([], -8.0, 10.0)

    def test_mask_covers_exactly_the_union(self, rng):
        for _ in range(100):
            spans = []
            for _ in range(rng.randint(0, 5)):
                start = rng.randint(0, 900)
                end = rng.randint(start + 1, 1000)
                spans.append(seg(rng.choice(["speech", "music"]), start / 100, end / 100))
            rate = rng.choice([4.0, 8.0, 12.5, 25.0, 50.0])
            schedule = build_mask(spans, rate, 10.0)
            masked = set(schedule.masked_frames)
            n_frames = int(10.0 * rate)
            for f in range(n_frames):
                f_start, f_end = f / rate, (f + 1) / rate
                overlaps = any(
                    f_start < iv.end_s and f_end > iv.start_s for iv in schedule.intervals
                )
                assert (f in masked) == overlaps, (f, rate, schedule.intervals)


class TestMergeIntervals:
    def test_merges_touching_and_overlapping(self):
        merged = merge_intervals(
            [TimeInterval(100, 200), TimeInterval(150, 250), TimeInterval(250, 300)]
        )
        assert [(iv.start_cs, iv.end_cs) for iv in merged] == [(100, 300)]

    def test_keeps_disjoint(self):
        merged = merge_intervals([TimeInterval(0, 10), TimeInterval(20, 30)])
        assert len(merged) == 2


class TestRunPfc:
    def test_hallucinating_mock_corrected_in_one_pass(self):
        generator = HallucinatingMockGenerator(span=(2.0, 4.0))
        outcome = run_pfc(meta(), generator, detect_with_baseline, passes=1)
        assert outcome.before.is_ih == 1
        assert outcome.before.d_s > 0
        assert outcome.after.d_s == 0.0
        assert outcome.generator_calls == 2
        assert generator.calls == 2
        assert len(outcome.schedules) == 1
        covered = outcome.schedules[0].intervals
        assert covered[0].start_s <= 2.0 + 0.1 and covered[-1].end_s >= 4.0 - 0.1

    def test_clean_mock_is_byte_identical_noop(self):
        generator = CleanMockGenerator()
        outcome = run_pfc(meta(), generator, detect_with_baseline, passes=1)
        assert outcome.generator_calls == 1
        assert generator.calls == 1
        assert outcome.schedules == ()
        assert outcome.final_audio == outcome.initial_audio
        assert outcome.before.d_s == 0.0 and outcome.after.d_s == 0.0

    def test_call_budget_respected_with_extra_passes(self):
        generator = HallucinatingMockGenerator()
        outcome = run_pfc(meta(), generator, detect_with_baseline, passes=3)
        # corrected after the first corrective pass, so no further calls
        assert outcome.generator_calls == 2

    def test_rejects_speech_music_labeled_clip(self):
        with pytest.raises(PfcError, match="label"):
            run_pfc(meta(in_ysm=True), CleanMockGenerator(), detect_with_baseline)

    def test_rejects_zero_passes(self):
        with pytest.raises(PfcError):
            run_pfc(meta(), CleanMockGenerator(), detect_with_baseline, passes=0)

    def test_detector_failure_preserves_partial(self):
        generator = HallucinatingMockGenerator()
        calls = {"n": 0}

        def flaky_detect(clip_id, wav):
            calls["n"] += 1
            if calls["n"] > 1:
                raise RuntimeError("detector crashed")
            return detect_with_baseline(clip_id, wav)

        with pytest.raises(DetectionError) as info:
            run_pfc(meta(), generator, flaky_detect, passes=1)
        partial = info.value.partial
        assert partial is not None
        assert partial.generator_calls == 2
        assert partial.before.is_ih == 1

    def test_feature_rate_change_rejected(self):
        class RateShifter(CleanMockGenerator):
            def generate(self, request):
                response = HallucinatingMockGenerator(
                    duration_s=self.duration_s
                ).generate(request)
                rate = 25.0 if request.pass_index == 0 else 50.0
                return type(response)(response.audio_wav, rate, response.version)

        with pytest.raises(GeneratorError, match="feature_rate_hz changed"):
            run_pfc(meta(), RateShifter(), detect_with_baseline, passes=1)


def mock_generator_app(generator, mode="b64"):
    app = FastAPI()

    @app.post("/generate")
    def generate(body: dict):
        request = GeneratorRequest(
            clip_id=body["clip_id"],
            media_uri=body["media_uri"],
            mask_intervals=tuple(
                TimeInterval.from_seconds(iv["start_s"], iv["end_s"])
                for iv in body["mask_intervals"]
            ),
            pass_index=body["pass_index"],
        )
        response = generator.generate(request)
        if mode == "b64":
            return {
                "audio_wav_b64": base64.b64encode(response.audio_wav).decode(),
                "feature_rate_hz": response.feature_rate_hz,
                "version": response.version,
            }
        if mode == "bad_rate":
            return {"audio_wav_b64": "", "feature_rate_hz": 0, "version": "v"}
        if mode == "missing_audio":
            return {"feature_rate_hz": 25.0, "version": "v"}
        raise AssertionError(mode)

    return app


class TestHttpClient:
    def _client(self, app, base="http://generator"):
        return HttpGeneratorClient(base, client=TestClient(app, base_url=base))

    def test_wire_roundtrip_matches_in_process_mock(self):
        generator = HallucinatingMockGenerator()
        http = self._client(mock_generator_app(HallucinatingMockGenerator()))
        request = GeneratorRequest("clip", "clip://clip", (), 0)
        over_wire = http.generate(request)
        in_process = generator.generate(request)
        assert over_wire.audio_wav == in_process.audio_wav
        assert over_wire.feature_rate_hz == in_process.feature_rate_hz

    def test_run_pfc_over_http(self):
        http = self._client(mock_generator_app(HallucinatingMockGenerator()))
        outcome = run_pfc(meta(), http, detect_with_baseline, passes=1)
        assert outcome.after.d_s == 0.0
        assert outcome.generator_calls == 2

    def test_protocol_violations(self):
        with pytest.raises(GeneratorError, match="feature_rate_hz"):
            self._client(mock_generator_app(CleanMockGenerator(), mode="bad_rate")).generate(
                GeneratorRequest("c", "u", (), 0)
            )
        with pytest.raises(GeneratorError, match="audio"):
            self._client(mock_generator_app(CleanMockGenerator(), mode="missing_audio")).generate(
                GeneratorRequest("c", "u", (), 0)
            )

    def test_http_error_status(self):
        app = FastAPI()

        @app.post("/generate")
        def generate():
            from fastapi.responses import JSONResponse

            return JSONResponse(status_code=503, content={})

        with pytest.raises(GeneratorError) as info:
            self._client(app).generate(GeneratorRequest("c", "u", (), 1))
        assert info.value.retriable
        assert info.value.pass_index == 1

    def test_timeout_is_retriable(self):
        class TimeoutTransport(httpx.BaseTransport):
            def handle_request(self, request):
                raise httpx.ConnectTimeout("boom")

        client = httpx.Client(transport=TimeoutTransport())
        http = HttpGeneratorClient("http://generator", client=client)
        with pytest.raises(GeneratorError) as info:
            http.generate(GeneratorRequest("c", "u", (), 0))
        assert info.value.retriable

    def test_file_uri_payload(self, tmp_path):
        wav = dump_wav(16000, silence(1.0, 16000))
        path = tmp_path / "audio.wav"
        path.write_bytes(wav)
        app = FastAPI()

        @app.post("/generate")
        def generate():
            return {"audio_uri": f"file://{path}", "feature_rate_hz": 25.0, "version": "v"}

        response = self._client(app).generate(GeneratorRequest("c", "u", (), 0))
        assert response.audio_wav == wav

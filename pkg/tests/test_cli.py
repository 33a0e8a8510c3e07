import json

import numpy as np
import pytest

import oracles
from ihkit import cli
from ihkit.audio import add_speechlike_noise, add_tone, save_wav, silence
from ihkit.segments import group_timelines, read_segment_records, rasterize

RATE = 16000


@pytest.fixture
def corpus(tmp_path):
    """Three tiny clips with known injected spans, plus manifest and label list."""
    spans = {
        "clip_a": {"music": [(1.0, 3.0)], "speech": [(5.0, 7.0)]},
        "clip_b": {"music": [], "speech": [(2.0, 4.5)]},
        "clip_c": {"music": [], "speech": []},
    }
    labels = {"clip_a": "vacuum cleaner", "clip_b": "sanding", "clip_c": "train horn"}
    for clip_id, injected in spans.items():
        x = silence(10.0, RATE)
        for start, end in injected["music"]:
            add_tone(x, RATE, start, end, 440.0, amplitude=0.25)
        for start, end in injected["speech"]:
            add_speechlike_noise(x, RATE, start, end, amplitude=0.3, seed=hash(clip_id) % 2**32)
        save_wav(tmp_path / f"{clip_id}.wav", RATE, x)
    manifest = tmp_path / "clips.jsonl"
    with open(manifest, "w") as handle:
        for clip_id, label in labels.items():
            handle.write(
                json.dumps({"clip_id": clip_id, "label": label, "duration_s": 10.0}) + "\n"
            )
    ysm = tmp_path / "ysm.txt"
    ysm.write_text("playing violin\nsinging\norchestra\n")
    return tmp_path, manifest, ysm, spans


def run(args):
    return cli.main([str(a) for a in args])


class TestDetectFuse:
    def test_detect_then_fuse_matches_oracle_vote(self, corpus):
        tmp, manifest, ysm, _ = corpus
        for preset, name in (("a", "d1"), ("b", "d2"), ("c", "d3")):
            assert run(["detect", "--audio-dir", tmp, "--out", tmp / f"{name}.jsonl",
                        "--preset", preset, "--source", f"det_{preset}"]) == 0
        assert run(["fuse", "--rule", "mv", "--inputs", tmp / "d1.jsonl", tmp / "d2.jsonl",
                    tmp / "d3.jsonl", "--manifest", manifest, "--out", tmp / "fused.jsonl"]) == 0

        durations = {f"clip_{c}": 10.0 for c in "abc"}
        detector_sets = [
            group_timelines(read_segment_records(tmp / name), durations)
            for name in ("d1.jsonl", "d2.jsonl", "d3.jsonl")
        ]
        fused = group_timelines(read_segment_records(tmp / "fused.jsonl"), durations)
        for clip_id in durations:
            expected = oracles.vote([d[clip_id] for d in detector_sets], 2, 0.01)
            got = rasterize(fused[clip_id], 0.01)
            for kind in ("speech", "music"):
                # post-fusion normalization only merges sub-0.15 s gaps / drops
                # sub-0.2 s fragments, which the brute-force vote lacks; on this
                # clean corpus both grids must agree everywhere.
                assert np.array_equal(got.kind_occupancy(kind), expected[kind])

    def test_detect_deterministic_bytes(self, corpus):
        tmp, _, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "x1.jsonl"])
        run(["detect", "--audio-dir", tmp, "--out", tmp / "x2.jsonl"])
        assert (tmp / "x1.jsonl").read_bytes() == (tmp / "x2.jsonl").read_bytes()

    def test_detect_requires_input(self, tmp_path):
        assert run(["detect", "--out", tmp_path / "x.jsonl"]) == 1


class TestEvalValidate:
    def test_eval_report_fields(self, corpus):
        tmp, manifest, ysm, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        assert run(["eval", "--segments", tmp / "d.jsonl", "--manifest", manifest,
                    "--ysm", ysm, "--dataset", "synown", "--model", "none",
                    "--out", tmp / "report.json"]) == 0
        report = json.loads((tmp / "report.json").read_text())
        assert set(report) >= {"dataset", "model", "ih_at_vid_pct", "ih_at_dur_pct", "m", "excluded"}
        assert report["m"] == 3
        assert report["ih_at_vid_pct"] == pytest.approx(66.67, abs=0.01)
        assert "config_digest" in report

    def test_eval_requires_ysm(self, corpus):
        tmp, manifest, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        assert run(["eval", "--segments", tmp / "d.jsonl", "--manifest", manifest,
                    "--out", tmp / "r.json"]) == 1

    def test_eval_all_excluded_errors(self, corpus):
        tmp, manifest, _, _ = corpus
        everything = tmp / "all.txt"
        everything.write_text("vacuum cleaner\nsanding\ntrain horn\n")
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        assert run(["eval", "--segments", tmp / "d.jsonl", "--manifest", manifest,
                    "--ysm", everything, "--out", tmp / "r.json"]) == 1

    def test_validate_identity_scores_100(self, corpus):
        tmp, manifest, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        assert run(["validate", "--pred", tmp / "d.jsonl", "--ref", tmp / "d.jsonl",
                    "--manifest", manifest, "--beta", "0.5", "--collar", "0.05",
                    "--out", tmp / "val.json"]) == 0
        val = json.loads((tmp / "val.json").read_text())
        assert val["f_beta_pct"] == 100.0
        assert val["precision_pct"] == 100.0


class TestAggregateCli:
    def test_aggregate_jsonl_and_csv(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(
            json.dumps({"clip_id": "c", "model": "m", "sublabel": "s",
                        "segment_type": "speech", "start": 0.0, "end": 1.0,
                        "annotator": "a1", "keep_short": False, "version": 1}) + "\n"
            + json.dumps({"clip_id": "c", "model": "m", "sublabel": "s",
                          "segment_type": "speech", "start": 1.1, "end": 2.0,
                          "annotator": "a1", "keep_short": False, "version": 2}) + "\n"
        )
        assert run(["aggregate", "--records", raw, "--out", tmp_path / "agg.csv",
                    "--format", "csv"]) == 0
        lines = (tmp_path / "agg.csv").read_text().splitlines()
        assert lines[1] == "c,m,s,speech,0.00,2.00"

    def test_aggregate_rejects_bad_schema(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(
            json.dumps({"clip_id": "c", "model": "m", "sublabel": "s",
                        "segment_type": "speech", "start": 2.0, "end": 1.0,
                        "annotator": "a1", "keep_short": False, "version": 1}) + "\n"
        )
        assert run(["aggregate", "--records", raw, "--out", tmp_path / "agg.jsonl"]) == 1


class TestPfcReport:
    def test_pfc_mock_pipeline_and_report_table(self, corpus):
        tmp, manifest, ysm, _ = corpus
        assert run(["pfc", "--manifest", manifest, "--ysm", ysm,
                    "--mock-generator", "hallucinating", "--dataset", "synown",
                    "--out", tmp / "pfc"]) == 0
        before = json.loads((tmp / "pfc" / "before.json").read_text())
        after = json.loads((tmp / "pfc" / "after.json").read_text())
        assert before["ih_at_vid_pct"] == 100.0
        assert after["ih_at_vid_pct"] == 0.0
        outcomes = [json.loads(l) for l in (tmp / "pfc" / "outcomes.jsonl").read_text().splitlines()]
        assert all(o["generator_calls"] == 2 for o in outcomes)

        assert run(["report", "--before", tmp / "pfc" / "before.json",
                    "--after", tmp / "pfc" / "after.json", "--out", tmp / "table.txt"]) == 0
        table = (tmp / "table.txt").read_text()
        assert "100.0%" in table and "before" in table and "delta" in table

    def test_report_known_delta_rows(self, tmp_path):
        before = {"dataset": "d", "model": "m", "ih_at_vid_pct": 19.07, "ih_at_dur_pct": 7.40,
                  "m": 100, "excluded": 0}
        after = {"dataset": "d", "model": "m", "ih_at_vid_pct": 10.23, "ih_at_dur_pct": 3.02,
                 "m": 100, "excluded": 0}
        (tmp_path / "before.json").write_text(json.dumps(before))
        (tmp_path / "after.json").write_text(json.dumps(after))
        assert run(["report", "--before", tmp_path / "before.json",
                    "--after", tmp_path / "after.json", "--out", tmp_path / "t.txt"]) == 0
        table = (tmp_path / "t.txt").read_text()
        assert "46.4%" in table
        assert "59.2%" in table

    def test_report_reference_row_and_mismatch(self, tmp_path):
        a = {"dataset": "d", "model": "m", "ih_at_vid_pct": 10.0, "ih_at_dur_pct": 5.0}
        b = {"dataset": "other", "model": "m", "ih_at_vid_pct": 5.0, "ih_at_dur_pct": 2.0}
        (tmp_path / "a.json").write_text(json.dumps(a))
        (tmp_path / "b.json").write_text(json.dumps(b))
        assert run(["report", "--before", tmp_path / "a.json", "--after", tmp_path / "b.json",
                    "--out", tmp_path / "t.txt"]) == 1
        b["dataset"] = "d"
        (tmp_path / "b.json").write_text(json.dumps(b))
        assert run(["report", "--before", tmp_path / "a.json", "--after", tmp_path / "b.json",
                    "--reference", tmp_path / "a.json", "--out", tmp_path / "t.txt"]) == 0
        assert "reference" in (tmp_path / "t.txt").read_text()

    def test_zero_baseline_renders_na(self, tmp_path):
        a = {"dataset": "d", "model": "m", "ih_at_vid_pct": 0.0, "ih_at_dur_pct": 0.0}
        (tmp_path / "a.json").write_text(json.dumps(a))
        assert run(["report", "--before", tmp_path / "a.json", "--after", tmp_path / "a.json",
                    "--out", tmp_path / "t.txt"]) == 0
        assert "n/a" in (tmp_path / "t.txt").read_text()


class TestRunLogsAndConfig:
    def test_runlog_carries_digest_and_hashes(self, corpus):
        tmp, _, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        log = json.loads((tmp / "d.jsonl.runlog.json").read_text())
        assert log["command"] == "detect"
        assert len(log["config_digest"]) == 16
        assert len(log["inputs"]) == 3
        assert all(len(v) == 64 for v in log["inputs"].values())

    def test_kv_config_overrides_defaults(self, corpus):
        tmp, manifest, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        config = tmp / "pipeline.cfg"
        config.write_text("# fusion settings\nmerge_gap = 0.30\nmin_dur = 0.25\n")
        assert run(["--config", config, "fuse", "--rule", "mv",
                    "--inputs", tmp / "d.jsonl", tmp / "d.jsonl", tmp / "d.jsonl",
                    "--manifest", manifest, "--out", tmp / "f.jsonl"]) == 0
        log = json.loads((tmp / "f.jsonl.runlog.json").read_text())
        assert log["config"]["merge_gap_s"] == 0.30
        assert log["config"]["min_dur_s"] == 0.25

    def test_flag_beats_config(self, corpus):
        tmp, manifest, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        config = tmp / "pipeline.cfg"
        config.write_text("merge_gap = 0.30\n")
        run(["--config", config, "fuse", "--rule", "mv", "--merge-gap", "0.10",
             "--inputs", tmp / "d.jsonl", tmp / "d.jsonl", tmp / "d.jsonl",
             "--manifest", manifest, "--out", tmp / "f.jsonl"])
        log = json.loads((tmp / "f.jsonl.runlog.json").read_text())
        assert log["config"]["merge_gap_s"] == 0.10

    def test_fuse_rerun_byte_identical(self, corpus):
        tmp, manifest, _, _ = corpus
        run(["detect", "--audio-dir", tmp, "--out", tmp / "d.jsonl"])
        for name in ("f1.jsonl", "f2.jsonl"):
            run(["fuse", "--rule", "mv", "--inputs", tmp / "d.jsonl", tmp / "d.jsonl",
                 tmp / "d.jsonl", "--manifest", manifest, "--out", tmp / name])
        assert (tmp / "f1.jsonl").read_bytes() == (tmp / "f2.jsonl").read_bytes()

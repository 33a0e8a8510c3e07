import pytest

import oracles
from conftest import random_timeline, seg, timeline
from ihkit.metrics import (
    ClipIhResult,
    ClipMeta,
    MetricsError,
    NoEvaluableClips,
    corpus_ih,
    corpus_report,
    evaluate_clip,
    f_beta,
    label_in_set,
    match_and_score,
    reduction_delta,
)


def meta(clip_id="c", label="vacuum cleaner", in_ysm=False, duration_s=10.0):
    return ClipMeta(clip_id, label, in_ysm, duration_s)


class TestEvaluateClip:
    def test_detected_speech_flags_clip(self):
        t = timeline("c", 10.0, [seg("speech", 1.0, 2.0)], source="fused")
        result = evaluate_clip(meta(), t)
        assert result.is_ih == 1
        assert result.d_s == pytest.approx(1.0)
        assert not result.excluded

    def test_speech_music_label_excluded(self):
        t = timeline("c", 10.0, [seg("speech", 1.0, 2.0)], source="fused")
        result = evaluate_clip(meta(label="playing violin", in_ysm=True), t)
        assert result.excluded
        assert result.is_ih == 0 and result.d_s == 0.0

    def test_empty_timeline_is_clean(self):
        result = evaluate_clip(meta(label="sanding"), timeline("c", 10.0, source="fused"))
        assert result.is_ih == 0 and result.d_s == 0.0

    def test_speech_music_overlap_counted_once(self):
        t = timeline("c", 10.0, [seg("speech", 0, 2), seg("music", 1, 3)], source="fused")
        assert evaluate_clip(meta(), t).d_s == pytest.approx(3.0)

    def test_duration_mismatch_rejected(self):
        t = timeline("c", 10.06, source="fused")
        with pytest.raises(MetricsError, match="duration"):
            evaluate_clip(meta(duration_s=10.0), t)
        # 0.05 s is tolerated
        evaluate_clip(meta(duration_s=10.0), timeline("c", 10.05, source="fused"))

    def test_clip_id_mismatch_rejected(self):
        with pytest.raises(MetricsError):
            evaluate_clip(meta(clip_id="a"), timeline("b", 10.0))


class TestCorpusIh:
    def test_two_clip_example(self):
        results = [
            ClipIhResult("a", False, 0, 0.0, 10.0),
            ClipIhResult("b", False, 1, 1.0, 10.0),
        ]
        stats = corpus_ih(results)
        assert stats["ih_at_vid"] == pytest.approx(0.5)
        assert stats["ih_at_dur"] == pytest.approx(0.05)
        assert stats["m"] == 2

    def test_all_clean(self):
        results = [ClipIhResult(f"c{i}", False, 0, 0.0, 5.0) for i in range(4)]
        stats = corpus_ih(results)
        assert stats["ih_at_vid"] == 0.0 and stats["ih_at_dur"] == 0.0

    def test_fully_hallucinated(self):
        results = [ClipIhResult(f"c{i}", False, 1, 5.0, 5.0) for i in range(3)]
        stats = corpus_ih(results)
        assert stats["ih_at_vid"] == 1.0 and stats["ih_at_dur"] == 1.0

    def test_no_evaluable_clips(self):
        with pytest.raises(NoEvaluableClips):
            corpus_ih([ClipIhResult("a", True, 0, 0.0, 10.0)])

    def test_excluded_never_contribute(self):
        results = [
            ClipIhResult("a", True, 0, 0.0, 10.0),
            ClipIhResult("b", False, 1, 2.0, 10.0),
        ]
        stats = corpus_ih(results)
        assert stats["m"] == 1 and stats["excluded"] == 1
        assert stats["ih_at_vid"] == 1.0

    def test_dur_bounded_by_vid_and_order_invariant(self, rng):
        for _ in range(100):
            results = []
            for i in range(rng.randint(1, 20)):
                t_s = rng.randint(100, 1000) / 100
                d_s = rng.choice([0.0, rng.uniform(0, t_s)])
                results.append(ClipIhResult(f"c{i}", rng.random() < 0.3, int(d_s > 0), d_s, t_s))
            if all(r.excluded for r in results):
                continue
            stats = corpus_ih(results)
            assert 0.0 <= stats["ih_at_dur"] <= stats["ih_at_vid"] <= 1.0
            shuffled = results[:]
            rng.shuffle(shuffled)
            assert corpus_ih(shuffled) == stats

    def test_report_percentages(self):
        results = [
            ClipIhResult("a", False, 0, 0.0, 10.0),
            ClipIhResult("b", False, 1, 1.0, 10.0),
        ]
        report = corpus_report(results, dataset="synthetic", model="mock")
        assert report["ih_at_vid_pct"] == 50.0
        assert report["ih_at_dur_pct"] == 5.0
        assert report["dataset"] == "synthetic" and report["m"] == 2


class TestFBeta:
    def test_equal_rates_fixed_point(self):
        for x in (0.0, 12.5, 50.0, 100.0):
            for beta in (0.25, 0.5, 1.0, 2.0):
                assert f_beta(x, x, beta) == pytest.approx(x)

    def test_published_fusion_scores(self):
        assert f_beta(90.93, 55.45, 0.5) == pytest.approx(80.61, abs=0.01)
        assert f_beta(85.40, 74.51, 0.5) == pytest.approx(82.97, abs=0.01)
        assert f_beta(84.94, 74.49, 0.5) == pytest.approx(82.62, abs=0.01)

    def test_zero_denominator(self):
        assert f_beta(0.0, 0.0, 0.5) == 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(MetricsError):
            f_beta(-1, 50, 0.5)
        with pytest.raises(MetricsError):
            f_beta(50, 50, 0.0)

    def test_between_min_and_max_and_monotone(self, rng):
        for _ in range(200):
            p, r = rng.uniform(0, 100), rng.uniform(0, 100)
            score = f_beta(p, r, 0.5)
            assert min(p, r) - 1e-9 <= score <= max(p, r) + 1e-9
            assert f_beta(p + 1, r, 0.5) >= score
            assert f_beta(p, r + 1, 0.5) >= score


class TestReductionDelta:
    def test_published_rows(self):
        assert reduction_delta(12.91, 6.14) == pytest.approx(52.4, abs=0.05)
        assert reduction_delta(24.34, 9.24) == pytest.approx(62.0, abs=0.05)

    def test_no_change(self):
        assert reduction_delta(7.5, 7.5) == 0.0

    def test_regression_is_negative(self):
        assert reduction_delta(5.0, 10.0) == -100.0

    def test_zero_baseline_not_applicable(self):
        assert reduction_delta(0.0, 1.0) is None

    def test_negative_rejected(self):
        with pytest.raises(MetricsError):
            reduction_delta(-1.0, 0.5)


def ts_pair(rng, duration_cs=1000):
    pred = random_timeline(rng, duration_cs=duration_cs, source="pred").normalized(0.0, 0.0)
    ref = random_timeline(rng, duration_cs=duration_cs, source="ref").normalized(0.0, 0.0)
    return pred, ref


class TestMatchAndScore:
    def test_identity_scores_100(self, rng):
        t = random_timeline(rng, duration_cs=800).normalized(0.0, 0.0)
        score = match_and_score({"c": t}, {"c": t}, collar_s=0.05, beta=0.5)
        assert score.precision == 100.0
        assert score.recall == 100.0
        assert score.f_beta == pytest.approx(100.0)
        assert score.iou == 100.0

    def test_both_empty_scores_100(self):
        empty = timeline("c", 5.0)
        score = match_and_score({"c": empty}, {"c": empty})
        assert score.precision == score.recall == score.iou == 100.0

    def test_empty_pred_nonempty_ref_scores_0(self):
        pred = timeline("c", 5.0)
        ref = timeline("c", 5.0, [seg("speech", 1, 2)])
        score = match_and_score({"c": pred}, {"c": ref})
        assert score.precision == 0.0 and score.recall == 0.0 and score.iou == 0.0

    def test_clip_set_mismatch_lists_ids(self):
        with pytest.raises(MetricsError, match="ghost"):
            match_and_score({"ghost": timeline("ghost", 5.0)}, {"real": timeline("real", 5.0)})

    def test_swap_symmetry_at_collar_zero(self, rng):
        for _ in range(30):
            pred, ref = ts_pair(rng)
            forward = match_and_score({"c": pred}, {"c": ref}, collar_s=0.0)
            backward = match_and_score({"c": ref}, {"c": pred}, collar_s=0.0)
            assert forward.precision == pytest.approx(backward.recall)
            assert forward.recall == pytest.approx(backward.precision)
            assert forward.iou == pytest.approx(backward.iou)

    def test_collar_excludes_boundary_frames(self):
        pred = timeline("c", 10.0, [seg("speech", 0.0, 1.04)])
        ref = timeline("c", 10.0, [seg("speech", 0.0, 1.0)])
        # pred's 0.04 s overhang sits inside the collar around ref's boundary
        score = match_and_score({"c": pred}, {"c": ref}, collar_s=0.05)
        assert score.fp_s == 0.0
        assert score.precision == 100.0

    def test_matches_bruteforce_counts(self, rng):
        for _ in range(100):
            pred, ref = ts_pair(rng)
            score = match_and_score({"c": pred}, {"c": ref}, collar_s=0.05, frame_len_s=0.01)
            tp, fp, fn = oracles.match_counts(pred, ref, 0.05, 0.01)
            assert round(score.tp_s / 0.01) == tp
            assert round(score.fp_s / 0.01) == fp
            assert round(score.fn_s / 0.01) == fn

    def test_duration_mismatch_rejected(self):
        with pytest.raises(MetricsError, match="duration"):
            match_and_score({"c": timeline("c", 5.0)}, {"c": timeline("c", 6.0)})

    def test_negative_collar_rejected(self):
        with pytest.raises(MetricsError):
            match_and_score({"c": timeline("c", 5.0)}, {"c": timeline("c", 5.0)}, collar_s=-0.1)


class TestLabelSet:
    def test_case_insensitive_exact(self, tmp_path):
        path = tmp_path / "ysm.txt"
        path.write_text("Playing Violin\nsinging  # inline comment\n\n# comment\n")
        from ihkit.metrics import load_label_set

        labels = load_label_set(path)
        assert label_in_set("playing violin", labels)
        assert label_in_set("SINGING", labels)
        assert not label_in_set("playing", labels)
        assert not label_in_set("violin", labels)

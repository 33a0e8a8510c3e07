"""Batch entry points: detect -> fuse -> eval -> validate -> aggregate -> pfc
-> report -> serve.

Every command is a deterministic function from input files to output files;
a machine-readable run log with the config digest and input hashes sits next
to each output.  Exit code is 0 iff no errors were reported.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, annotation
from .audio import AudioError
from .detector import BASELINE_SOURCE, DetectorConfig, DetectorError, analyze, analyze_file, perturbed_configs
from .fusion import FusionError, FusionRule, FusionVariant, fuse_corpus
from .metrics import (
    ClipMeta,
    MetricsError,
    corpus_report,
    evaluate_clip,
    label_in_set,
    load_label_set,
    match_and_score,
    reduction_delta,
)
from .pfc import (
    CleanMockGenerator,
    HallucinatingMockGenerator,
    HttpGeneratorClient,
    PfcError,
    run_pfc,
)
from .segments import (
    DEFAULT_BETA,
    DEFAULT_COLLAR_S,
    DEFAULT_FRAME_LEN_S,
    DEFAULT_MERGE_GAP_S,
    DEFAULT_MIN_DUR_S,
    JsonlError,
    SegmentError,
    group_timelines,
    read_segment_records,
    write_segments_jsonl,
)


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# manifests, config files, run logs
# ---------------------------------------------------------------------------


def load_manifest(path, ysm: frozenset[str] | None = None) -> tuple[list[ClipMeta], dict[str, str]]:
    """Read the clip manifest JSONL; returns metas plus clip_id -> media path."""
    metas: list[ClipMeta] = []
    media: dict[str, str] = {}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}: line {lineno}: invalid JSON ({exc.msg})")
            try:
                clip_id = str(obj["clip_id"])
                label = str(obj.get("label", ""))
                duration_s = float(obj["duration_s"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CliError(f"{path}: line {lineno}: malformed manifest entry ({exc})")
            if clip_id in seen:
                raise CliError(f"{path}: line {lineno}: duplicate clip_id {clip_id!r}")
            seen.add(clip_id)
            metas.append(
                ClipMeta(
                    clip_id=clip_id,
                    label=label,
                    in_ysm=label_in_set(label, ysm) if ysm is not None else False,
                    duration_s=duration_s,
                    model=str(obj.get("model", "")),
                    sublabel=str(obj.get("sublabel", "")),
                )
            )
            if obj.get("media"):
                media[clip_id] = str(obj["media"])
    if not metas:
        raise CliError(f"{path}: empty manifest")
    metas.sort(key=lambda m: m.clip_id)
    return metas, media


def load_kv_config(path) -> dict:
    """key = value lines; '#' starts a comment."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}: line {lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = _coerce(raw)
    return values


def _coerce(raw: str):
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def write_run_log(out_path, command: str, config: dict, inputs: list, counts: dict, started: float) -> str:
    digest = config_digest(config)
    log = {
        "command": command,
        "version": __version__,
        "config": config,
        "config_digest": digest,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "counts": counts,
        "elapsed_s": round(time.time() - started, 3),
    }
    log_path = Path(str(out_path) + ".runlog.json")
    log_path.write_text(json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return digest


def _durations(metas: list[ClipMeta]) -> dict[str, float]:
    return {meta.clip_id: meta.duration_s for meta in metas}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_detect(args) -> int:
    started = time.time()
    paths: list[Path] = []
    if args.audio_dir:
        paths.extend(sorted(Path(args.audio_dir).glob("*.wav")))
    paths.extend(Path(p) for p in args.audio)
    if not paths:
        raise CliError("no input audio: pass --audio files or --audio-dir")
    config = DetectorConfig(**json.loads(Path(args.detector_config).read_text())) \
        if args.detector_config else DetectorConfig()
    if args.preset:
        config = perturbed_configs(config)[{"a": 0, "b": 1, "c": 2}[args.preset]]

    def one(path: Path):
        return analyze_file(path, config, source=args.source)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        timelines = list(pool.map(one, paths))
    timelines.sort(key=lambda t: t.clip_id)
    n = write_segments_jsonl(args.out, timelines)
    write_run_log(
        args.out, "detect", {"detector": config.to_dict(), "source": args.source},
        paths, {"clips": len(timelines), "segments": n}, started,
    )
    print(f"detect: {len(timelines)} clips, {n} segments -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    started = time.time()
    metas, _ = load_manifest(args.manifest)
    durations = _durations(metas)
    per_detector = []
    for path in args.inputs:
        records = read_segment_records(path)
        per_detector.append(group_timelines(records, durations))
    rule = FusionRule(FusionVariant(args.rule), len(per_detector))
    fused = fuse_corpus(
        per_detector, rule,
        frame_len_s=args.frame_len, merge_gap_s=args.merge_gap, min_dur_s=args.min_dur,
    )
    n = write_segments_jsonl(args.out, fused.values())
    config = {
        "rule": args.rule, "k": rule.k, "frame_len_s": args.frame_len,
        "merge_gap_s": args.merge_gap, "min_dur_s": args.min_dur,
    }
    write_run_log(args.out, "fuse", config, list(args.inputs) + [args.manifest],
                  {"clips": len(fused), "segments": n}, started)
    print(f"fuse[{args.rule}]: {len(fused)} clips, {n} segments -> {args.out}")
    return 0


def _load_ysm(args) -> frozenset[str]:
    if not args.ysm:
        raise CliError(
            "--ysm is required: the speech/music label filter is mandatory for evaluation"
        )
    return load_label_set(args.ysm)


def cmd_eval(args) -> int:
    started = time.time()
    ysm = _load_ysm(args)
    metas, _ = load_manifest(args.manifest, ysm)
    durations = _durations(metas)
    records = read_segment_records(args.segments)
    timelines = group_timelines(records, durations)
    results = [evaluate_clip(meta, timelines[meta.clip_id]) for meta in metas]
    report = corpus_report(results, dataset=args.dataset, model=args.model)
    config = {"dataset": args.dataset, "model": args.model, "ysm": sorted(ysm)}
    report["config_digest"] = write_run_log(
        args.out, "eval", config, [args.segments, args.manifest, args.ysm],
        {"clips": len(metas), "evaluable": report["m"], "excluded": report["excluded"]},
        started,
    )
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"eval: IH@vid {report['ih_at_vid_pct']:.2f}%  IH@dur {report['ih_at_dur_pct']:.2f}%  "
        f"(M={report['m']}, excluded={report['excluded']}) -> {args.out}"
    )
    return 0


def cmd_validate(args) -> int:
    started = time.time()
    metas, _ = load_manifest(args.manifest)
    durations = _durations(metas)
    pred = group_timelines(read_segment_records(args.pred), durations)
    ref = group_timelines(read_segment_records(args.ref), durations)
    score = match_and_score(pred, ref, collar_s=args.collar, beta=args.beta, frame_len_s=args.frame_len)
    payload = score.to_dict()
    config = {"collar_s": args.collar, "beta": args.beta, "frame_len_s": args.frame_len}
    payload["config_digest"] = write_run_log(
        args.out, "validate", config, [args.pred, args.ref, args.manifest],
        {"clips": len(durations)}, started,
    )
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"validate: P {score.precision:.2f}  R {score.recall:.2f}  "
        f"F{args.beta:g} {score.f_beta:.2f}  IoU {score.iou:.2f} -> {args.out}"
    )
    return 0


def cmd_aggregate(args) -> int:
    started = time.time()
    records = annotation.read_raw_jsonl(args.records)
    report = annotation.validate_records(records)
    if report.schema_errors:
        for finding in report.schema_errors:
            print(f"schema error: {finding.clip_id}: {finding.message}", file=sys.stderr)
        raise CliError(f"{len(report.schema_errors)} schema errors; aggregation refused")
    aggregated = annotation.aggregate(records, merge_gap_s=args.merge_gap, min_dur_s=args.min_dur)
    payload = annotation.export(aggregated, format=args.format)
    Path(args.out).write_bytes(payload)
    config = {"merge_gap_s": args.merge_gap, "min_dur_s": args.min_dur, "format": args.format}
    write_run_log(args.out, "aggregate", config, [args.records],
                  {"records_in": len(records), "records_out": len(aggregated)}, started)
    print(f"aggregate: {len(records)} -> {len(aggregated)} records -> {args.out}")
    return 0


def cmd_pfc(args) -> int:
    started = time.time()
    ysm = _load_ysm(args)
    metas, _ = load_manifest(args.manifest, ysm)
    evaluable = [meta for meta in metas if not meta.in_ysm]
    if not evaluable:
        raise CliError("no evaluable clips: every manifest label is in the speech/music set")

    if args.generator_url:
        generator_factory = lambda: HttpGeneratorClient(args.generator_url)  # noqa: E731
    elif args.mock_generator == "clean":
        generator_factory = CleanMockGenerator
    elif args.mock_generator == "hallucinating":
        generator_factory = HallucinatingMockGenerator
    else:
        raise CliError("pass --generator-url or --mock-generator")

    detector_config = DetectorConfig()

    def detect(clip_id: str, wav: bytes):
        from .audio import load_wav

        rate, samples = load_wav(wav)
        return analyze(samples, rate, detector_config, clip_id=clip_id, source="fused")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(meta: ClipMeta):
        return run_pfc(meta, generator_factory(), detect, passes=args.passes)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        outcomes = list(pool.map(one, evaluable))

    outcomes_path = out_dir / "outcomes.jsonl"
    with open(outcomes_path, "w", encoding="utf-8") as handle:
        for outcome in outcomes:
            handle.write(json.dumps(outcome.to_dict(), sort_keys=True) + "\n")

    before = corpus_report([o.before for o in outcomes], dataset=args.dataset, model=args.model)
    after = corpus_report([o.after for o in outcomes], dataset=args.dataset, model=args.model)
    (out_dir / "before.json").write_text(json.dumps(before, indent=2, sort_keys=True) + "\n")
    (out_dir / "after.json").write_text(json.dumps(after, indent=2, sort_keys=True) + "\n")
    config = {
        "passes": args.passes,
        "generator": args.generator_url or f"mock:{args.mock_generator}",
        "detector": detector_config.to_dict(),
    }
    write_run_log(outcomes_path, "pfc", config, [args.manifest, args.ysm],
                  {"clips": len(outcomes),
                   "total_generator_calls": sum(o.generator_calls for o in outcomes)},
                  started)
    print(
        f"pfc: IH@vid {before['ih_at_vid_pct']:.2f}% -> {after['ih_at_vid_pct']:.2f}%, "
        f"IH@dur {before['ih_at_dur_pct']:.2f}% -> {after['ih_at_dur_pct']:.2f}% "
        f"({len(outcomes)} clips) -> {out_dir}"
    )
    return 0


def _format_delta(before: float, after: float) -> str:
    delta = reduction_delta(before, after)
    return "n/a" if delta is None else f"{delta:.1f}%"


def cmd_report(args) -> int:
    started = time.time()
    before = json.loads(Path(args.before).read_text(encoding="utf-8"))
    after = json.loads(Path(args.after).read_text(encoding="utf-8"))
    for key in ("dataset", "model"):
        if before.get(key) != after.get(key):
            raise CliError(
                f"{key} mismatch between reports: {before.get(key)!r} vs {after.get(key)!r}"
            )
    reference = json.loads(Path(args.reference).read_text(encoding="utf-8")) if args.reference else None

    lines = [
        f"dataset: {before.get('dataset') or '-'}    model: {before.get('model') or '-'}",
        "",
        f"{'':12s}{'IH@vid':>10s}{'IH@dur':>10s}",
    ]
    if reference is not None:
        lines.append(
            f"{'reference':12s}{reference['ih_at_vid_pct']:>9.2f}%{reference['ih_at_dur_pct']:>9.2f}%"
        )
    lines.append(f"{'before':12s}{before['ih_at_vid_pct']:>9.2f}%{before['ih_at_dur_pct']:>9.2f}%")
    lines.append(f"{'after':12s}{after['ih_at_vid_pct']:>9.2f}%{after['ih_at_dur_pct']:>9.2f}%")
    lines.append(
        f"{'delta':12s}"
        f"{_format_delta(before['ih_at_vid_pct'], after['ih_at_vid_pct']):>10s}"
        f"{_format_delta(before['ih_at_dur_pct'], after['ih_at_dur_pct']):>10s}"
    )
    text = "\n".join(lines) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    inputs = [args.before, args.after] + ([args.reference] if args.reference else [])
    write_run_log(args.out, "report", {"reference": bool(args.reference)}, inputs, {}, started)
    print(text, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationStore, create_app

    metas, media = load_manifest(args.manifest)
    tokens = json.loads(Path(args.tokens).read_text(encoding="utf-8")) if args.tokens else {}
    manifest_dir = Path(args.manifest).resolve().parent
    media_paths = {}
    for clip_id, rel in media.items():
        path = Path(rel)
        media_paths[clip_id] = path if path.is_absolute() else manifest_dir / path
    store = AnnotationStore(args.store, metas)
    app = create_app(
        store,
        media_paths=media_paths,
        tokens=tokens,
        iou_floor=args.iou_floor,
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="ihkit", description=__doc__)
    parser.add_argument("--config", help="key = value defaults file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: list[argparse.ArgumentParser] = []
    original_add_parser = sub.add_parser

    def add_parser(*args, **kwargs):
        p = original_add_parser(*args, **kwargs)
        subparsers.append(p)
        return p

    sub.add_parser = add_parser  # type: ignore[method-assign]

    p = sub.add_parser("detect", help="run the baseline detector over WAV files")
    p.add_argument("--audio", nargs="*", default=[], help="input WAV files")
    p.add_argument("--audio-dir", default=None, help="directory of WAV files")
    p.add_argument("--out", required=True, help="output segment JSONL")
    p.add_argument("--source", default=BASELINE_SOURCE)
    p.add_argument("--detector-config", default=None, help="DetectorConfig JSON file")
    p.add_argument("--preset", choices=["a", "b", "c"], default=None,
                   help="perturbed ensemble parameterization")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fuse", help="fuse detector JSONLs under a voting rule")
    p.add_argument("--rule", choices=[v.value for v in FusionVariant], default="mv")
    p.add_argument("--inputs", nargs="+", required=True, help="one JSONL per detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-len", type=float, default=DEFAULT_FRAME_LEN_S)
    p.add_argument("--merge-gap", type=float, default=DEFAULT_MERGE_GAP_S)
    p.add_argument("--min-dur", type=float, default=DEFAULT_MIN_DUR_S)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="corpus hallucination metrics from fused segments")
    p.add_argument("--segments", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ysm", required=False, default=None,
                   help="speech/music label list (one per line); mandatory")
    p.add_argument("--dataset", default="")
    p.add_argument("--model", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="score predictions against reference labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--collar", type=float, default=DEFAULT_COLLAR_S)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--frame-len", type=float, default=DEFAULT_FRAME_LEN_S)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("aggregate", help="merge/drop annotation records and export")
    p.add_argument("--records", required=True, help="raw annotation JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--merge-gap", type=float, default=DEFAULT_MERGE_GAP_S)
    p.add_argument("--min-dur", type=float, default=DEFAULT_MIN_DUR_S)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("pfc", help="two-pass correction against a generator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ysm", required=False, default=None)
    p.add_argument("--generator-url", default=None)
    p.add_argument("--mock-generator", choices=["clean", "hallucinating"], default=None)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dataset", default="")
    p.add_argument("--model", default="")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pfc)

    p = sub.add_parser("report", help="before/after table with reduction deltas")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--reference", default=None, help="report from reference audio")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--tokens", default=None, help="JSON token -> annotator table")
    p.add_argument("--iou-floor", type=float, default=0.5)
    p.add_argument("--ui-dir", default=None, help="static annotation UI build")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = build_parser()
    args, remaining = parser.parse_known_args(argv)
    if args.config:
        defaults = load_kv_config(args.config)
        parser.set_defaults(**defaults)
        for subparser in subparsers:
            known = {a.dest for a in subparser._actions}
            subparser.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        args = parser.parse_args(argv)
    elif remaining:
        parser.error(f"unrecognized arguments: {' '.join(remaining)}")
    try:
        return args.func(args)
    except (CliError, SegmentError, JsonlError, FusionError, MetricsError,
            DetectorError, AudioError, PfcError, annotation.AnnotationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""HTTP service backing the annotation UI: clip manifest, byte-range media,
versioned annotation CRUD with compare-and-set, submission, QC, adjudication,
and export."""

from __future__ import annotations

import mimetypes
from pathlib import Path
from typing import Mapping

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..annotation import QcReport, aggregate, compare_annotators, export, validate_records
from .schemas import (
    AdjudicateRequest,
    AdjudicateResponse,
    ClipInfo,
    ExportRecordOut,
    PutAnnotationsRequest,
    PutAnnotationsResponse,
    QcReportOut,
    SessionView,
    SubmitResponse,
)
from .store import (
    AnnotationStore,
    SegmentValidation,
    SessionSubmitted,
    UnknownClip,
    VersionConflict,
)


def create_app(
    store: AnnotationStore,
    media_paths: Mapping[str, Path] | None = None,
    tokens: Mapping[str, str] | None = None,
    iou_floor: float = 0.5,
    ui_dir: Path | None = None,
) -> FastAPI:
    """Build the service around a store.

    ``media_paths`` maps clip_id to a local media file.  ``tokens`` is the
    static annotator-token table; when non-empty, mutating requests must send
    X-Annotator-Token resolving to the annotator they act for.
    """
    app = FastAPI(title="annotation service")
    media_paths = dict(media_paths or {})
    tokens = dict(tokens or {})

    def authorize(annotator: str, token: str | None) -> None:
        if not tokens:
            return
        if token is None or token not in tokens:
            raise HTTPException(401, detail={"error": "unauthorized"})
        if tokens[token] != annotator:
            raise HTTPException(403, detail={"error": "token does not match annotator"})

    def require_token(x_annotator_token: str | None = Header(default=None)) -> str | None:
        return x_annotator_token

    @app.exception_handler(UnknownClip)
    async def _unknown_clip(_request: Request, exc: UnknownClip):
        return JSONResponse(status_code=404, content={"error": "unknown_clip", "detail": str(exc)})

    @app.exception_handler(VersionConflict)
    async def _conflict(_request: Request, exc: VersionConflict):
        return JSONResponse(
            status_code=409,
            content={"error": "version_conflict", "current_version": exc.current_version},
        )

    @app.exception_handler(SessionSubmitted)
    async def _submitted(_request: Request, exc: SessionSubmitted):
        return JSONResponse(status_code=409, content={"error": "session_submitted", "detail": str(exc)})

    @app.exception_handler(SegmentValidation)
    async def _invalid(_request: Request, exc: SegmentValidation):
        return JSONResponse(
            status_code=422, content={"error": "invalid_segments", "fields": exc.messages}
        )

    @app.get("/api/clips", response_model=list[ClipInfo])
    def list_clips():
        out = []
        for clip_id in sorted(store.manifest):
            meta = store.manifest[clip_id]
            out.append(
                ClipInfo(
                    clip_id=clip_id,
                    duration_s=round(meta.duration_s, 2),
                    label=meta.label,
                    model=meta.model,
                    sublabel=meta.sublabel,
                    media_url=f"/api/clips/{clip_id}/media" if clip_id in media_paths else None,
                )
            )
        return out

    @app.get("/api/clips/{clip_id}/media")
    def get_media(clip_id: str, request: Request):
        if clip_id not in store.manifest:
            raise UnknownClip(f"unknown clip {clip_id!r}")
        path = media_paths.get(clip_id)
        if path is None or not Path(path).exists():
            return JSONResponse(status_code=404, content={"error": "no_media"})
        return _range_response(Path(path), request.headers.get("range"))

    @app.get("/api/clips/{clip_id}/annotations", response_model=SessionView)
    def get_annotations(clip_id: str, annotator: str = Query(...)):
        state = store.get_session(clip_id, annotator)
        return SessionView(
            clip_id=state.clip_id,
            annotator=state.annotator,
            version=state.version,
            submitted=state.submitted,
            segments=state.segments,
            edit_log=state.edit_log,
        )

    @app.put("/api/clips/{clip_id}/annotations", response_model=PutAnnotationsResponse)
    def put_annotations(
        clip_id: str,
        body: PutAnnotationsRequest,
        annotator: str = Query(...),
        token: str | None = Depends(require_token),
    ):
        authorize(annotator, token)
        version, warnings = store.put_annotations(
            clip_id,
            annotator,
            body.expected_version,
            [s.model_dump() for s in body.segments],
            edit=body.edit,
        )
        return PutAnnotationsResponse(
            clip_id=clip_id, annotator=annotator, version=version, warnings=warnings
        )

    @app.post("/api/clips/{clip_id}/submit", response_model=SubmitResponse)
    def submit(
        clip_id: str,
        annotator: str = Query(...),
        token: str | None = Depends(require_token),
    ):
        authorize(annotator, token)
        records = store.submit(clip_id, annotator)
        state = store.get_session(clip_id, annotator)
        return SubmitResponse(
            clip_id=clip_id,
            annotator=annotator,
            version=state.version,
            records=[_record_out(r) for r in records],
        )

    @app.post("/api/clips/{clip_id}/adjudicate", response_model=AdjudicateResponse)
    def adjudicate(
        clip_id: str,
        body: AdjudicateRequest,
        token: str | None = Depends(require_token),
    ):
        authorize(body.adjudicator, token)
        records = store.adjudicate(clip_id, body.adjudicator, [s.model_dump() for s in body.segments])
        return AdjudicateResponse(
            clip_id=clip_id, adjudicator=body.adjudicator, records=[_record_out(r) for r in records]
        )

    @app.get("/api/qc/report", response_model=QcReportOut)
    def qc_report():
        return QcReportOut(**_build_qc(store, iou_floor).to_dict())

    @app.get("/api/export")
    def export_records(
        format: str = Query("jsonl", pattern="^(jsonl|csv)$"),
        split: str = Query("raw", pattern="^(raw|adjudicated|aggregated)$"),
    ):
        if split == "adjudicated":
            records = store.adjudicated_records()
        else:
            records = store.submitted_records()
        if split == "aggregated":
            records = aggregate(records)
        payload = export(records, format)
        media_type = "text/csv" if format == "csv" else "application/x-ndjson"
        return Response(content=payload, media_type=media_type)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _record_out(record) -> ExportRecordOut:
    return ExportRecordOut(
        clip_id=record.clip_id,
        model=record.model,
        sublabel=record.sublabel,
        segment_type=record.segment_type,
        start=round(record.start, 2),
        end=round(record.end, 2),
    )


def _build_qc(store: AnnotationStore, iou_floor: float) -> QcReport:
    """Validate every submitted set and compare annotator pairs clip-wise."""
    by_annotator = store.submitted_by_annotator()
    all_records = [r for records in by_annotator.values() for r in records]
    report = validate_records(all_records)
    report.iou_floor = iou_floor

    annotators = sorted(by_annotator)
    required: set[str] = set()
    for i, first in enumerate(annotators):
        for second in annotators[i + 1 :]:
            shared = store.submitted_clips(first) & store.submitted_clips(second)
            if not shared:
                continue
            a = [r for r in by_annotator[first] if r.clip_id in shared]
            b = [r for r in by_annotator[second] if r.clip_id in shared]
            pair = compare_annotators(a, b, iou_floor)
            for clip_id in shared:
                agreement = pair.flag_agreement.get(clip_id, True)
                iou = pair.segment_iou.get(clip_id, 1.0)
                report.flag_agreement[clip_id] = (
                    report.flag_agreement.get(clip_id, True) and agreement
                )
                report.segment_iou[clip_id] = min(report.segment_iou.get(clip_id, 1.0), iou)
            required.update(pair.adjudication_required)
    report.adjudication_required = sorted(required)
    return report


def _range_response(path: Path, range_header: str | None) -> Response:
    """Serve a file with single-range support so span playback can seek."""
    data = path.read_bytes()
    size = len(data)
    media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    headers = {"accept-ranges": "bytes"}
    if range_header:
        parsed = _parse_range(range_header, size)
        if parsed is None:
            headers["content-range"] = f"bytes */{size}"
            return Response(status_code=416, headers=headers)
        start, end = parsed
        headers["content-range"] = f"bytes {start}-{end}/{size}"
        return Response(
            content=data[start : end + 1],
            status_code=206,
            media_type=media_type,
            headers=headers,
        )
    return Response(content=data, media_type=media_type, headers=headers)


def _parse_range(header: str, size: int) -> tuple[int, int] | None:
    header = header.strip().lower()
    if not header.startswith("bytes="):
        return None
    spec = header[len("bytes=") :].split(",")[0].strip()
    if "-" not in spec:
        return None
    start_text, end_text = spec.split("-", 1)
    try:
        if start_text == "":
            # suffix range: last N bytes
            length = int(end_text)
            if length <= 0:
                return None
            return max(0, size - length), size - 1
        start = int(start_text)
        end = int(end_text) if end_text else size - 1
    except ValueError:
        return None
    if start >= size or end < start:
        return None
    return start, min(end, size - 1)

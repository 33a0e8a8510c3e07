"""Pydantic request/response models for the annotation service API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class SegmentIn(BaseModel):
    segment_type: str
    start: float
    end: float
    keep_short: bool = False


class PutAnnotationsRequest(BaseModel):
    expected_version: int = Field(ge=0)
    segments: list[SegmentIn]
    edit: str | None = None  # optional client edit descriptor: add/move/delete/replace


class PutAnnotationsResponse(BaseModel):
    clip_id: str
    annotator: str
    version: int
    warnings: list[str] = []


class SessionView(BaseModel):
    clip_id: str
    annotator: str
    version: int
    submitted: bool
    segments: list[SegmentIn]
    edit_log: list[str] = []


class ClipInfo(BaseModel):
    clip_id: str
    duration_s: float
    label: str = ""
    model: str = ""
    sublabel: str = ""
    media_url: str | None = None


class ExportRecordOut(BaseModel):
    clip_id: str
    model: str
    sublabel: str
    segment_type: str
    start: float
    end: float


class SubmitResponse(BaseModel):
    clip_id: str
    annotator: str
    version: int
    records: list[ExportRecordOut]


class AdjudicateRequest(BaseModel):
    adjudicator: str
    segments: list[SegmentIn]


class AdjudicateResponse(BaseModel):
    clip_id: str
    adjudicator: str
    records: list[ExportRecordOut]


class QcFindingOut(BaseModel):
    clip_id: str
    message: str


class QcReportOut(BaseModel):
    schema_errors: list[QcFindingOut]
    consistency_errors: list[QcFindingOut]
    flag_agreement: dict[str, bool]
    segment_iou: dict[str, float]
    adjudication_required: list[str]
    iou_floor: float


class ErrorBody(BaseModel):
    error: str
    detail: str | None = None
    current_version: int | None = None
    fields: list[str] | None = None

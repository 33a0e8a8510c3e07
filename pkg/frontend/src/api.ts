/** Typed client for the annotation service HTTP API. */

import type { WireSegment } from "./model.js";

export interface ClipInfo {
    clip_id: string;
    duration_s: number;
    label: string;
    model: string;
    sublabel: string;
    media_url: string | null;
}

export interface SessionView {
    clip_id: string;
    annotator: string;
    version: number;
    submitted: boolean;
    segments: WireSegment[];
    edit_log: string[];
}

export type PutResult =
    | { ok: true; version: number; warnings: string[] }
    | { ok: false; error: "version_conflict"; currentVersion: number }
    | { ok: false; error: "session_submitted" }
    | { ok: false; error: "invalid_segments"; fields: string[] };

export interface QcReport {
    schema_errors: { clip_id: string; message: string }[];
    consistency_errors: { clip_id: string; message: string }[];
    flag_agreement: Record<string, boolean>;
    segment_iou: Record<string, number>;
    adjudication_required: string[];
    iou_floor: number;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    constructor(message: string, readonly status: number) {
        super(message);
    }
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string,
        private readonly token: string | null = null,
        private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    ) {}

    private headers(json = true): Record<string, string> {
        const headers: Record<string, string> = {};
        if (json) {
            headers["content-type"] = "application/json";
        }
        if (this.token) {
            headers["x-annotator-token"] = this.token;
        }
        return headers;
    }

    private url(path: string): string {
        return `${this.baseUrl}${path}`;
    }

    async listClips(): Promise<ClipInfo[]> {
        const response = await this.fetchImpl(this.url("/api/clips"));
        if (!response.ok) {
            throw new ApiError("cannot load clip manifest", response.status);
        }
        return (await response.json()) as ClipInfo[];
    }

    async getAnnotations(clipId: string, annotator: string): Promise<SessionView> {
        const response = await this.fetchImpl(
            this.url(`/api/clips/${encodeURIComponent(clipId)}/annotations?annotator=${encodeURIComponent(annotator)}`),
        );
        if (!response.ok) {
            throw new ApiError(`cannot load annotations for ${clipId}`, response.status);
        }
        return (await response.json()) as SessionView;
    }

    async putAnnotations(
        clipId: string,
        annotator: string,
        expectedVersion: number,
        segments: WireSegment[],
        edit?: string,
    ): Promise<PutResult> {
        const response = await this.fetchImpl(
            this.url(`/api/clips/${encodeURIComponent(clipId)}/annotations?annotator=${encodeURIComponent(annotator)}`),
            {
                method: "PUT",
                headers: this.headers(),
                body: JSON.stringify({ expected_version: expectedVersion, segments, edit: edit ?? null }),
            },
        );
        const body = await response.json();
        if (response.ok) {
            return { ok: true, version: body.version, warnings: body.warnings ?? [] };
        }
        if (response.status === 409 && body.error === "version_conflict") {
            return { ok: false, error: "version_conflict", currentVersion: body.current_version };
        }
        if (response.status === 409 && body.error === "session_submitted") {
            return { ok: false, error: "session_submitted" };
        }
        if (response.status === 422) {
            return { ok: false, error: "invalid_segments", fields: body.fields ?? [] };
        }
        throw new ApiError(`write failed with HTTP ${response.status}`, response.status);
    }

    async submit(clipId: string, annotator: string): Promise<{ version: number }> {
        const response = await this.fetchImpl(
            this.url(`/api/clips/${encodeURIComponent(clipId)}/submit?annotator=${encodeURIComponent(annotator)}`),
            { method: "POST", headers: this.headers() },
        );
        if (!response.ok) {
            throw new ApiError(`submit failed with HTTP ${response.status}`, response.status);
        }
        const body = await response.json();
        return { version: body.version };
    }

    async qcReport(): Promise<QcReport> {
        const response = await this.fetchImpl(this.url("/api/qc/report"));
        if (!response.ok) {
            throw new ApiError("cannot load QC report", response.status);
        }
        return (await response.json()) as QcReport;
    }

    async exportRecords(format: "jsonl" | "csv", split: "raw" | "adjudicated" = "raw"): Promise<string> {
        const response = await this.fetchImpl(this.url(`/api/export?format=${format}&split=${split}`));
        if (!response.ok) {
            throw new ApiError("export failed", response.status);
        }
        return await response.text();
    }

    mediaUrl(clipId: string): string {
        return this.url(`/api/clips/${encodeURIComponent(clipId)}/media`);
    }
}

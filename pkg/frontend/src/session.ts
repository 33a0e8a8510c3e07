/**
 * Optimistic-concurrency session: local drafts, versioned writes, and the
 * reload-and-reapply flow for conflicting writers.
 *
 * Every add/move/delete is pushed to the server as a versioned write.  A 409
 * conflict parks the session in a conflict state and keeps the local drafts;
 * `reloadAndReapply` refreshes the server version and replays them.
 */

import { ApiClient } from "./api.js";
import { DraftStore, SegmentKind, WireSegment } from "./model.js";

export type SessionPhase = "editing" | "conflict" | "submitted" | "error";

function segmentKey(segment: WireSegment): string {
    return `${segment.segment_type}|${segment.start}|${segment.end}|${segment.keep_short ? 1 : 0}`;
}

export class SessionController {
    readonly store = new DraftStore();
    version = 0;
    phase: SessionPhase = "editing";
    conflictVersion: number | null = null;
    fieldErrors: string[] = [];
    lastWarnings: string[] = [];
    /** Last server state this session successfully synced; merge base for conflicts. */
    private baseline: WireSegment[] = [];

    constructor(
        private readonly api: ApiClient,
        readonly clipId: string,
        readonly annotator: string,
    ) {}

    /** Rebuild the whole session from the server (initial load and reloads). */
    async load(): Promise<void> {
        const view = await this.api.getAnnotations(this.clipId, this.annotator);
        this.version = view.version;
        this.store.loadFromWire(view.segments);
        this.baseline = this.store.toWire();
        this.phase = view.submitted ? "submitted" : "editing";
        this.conflictVersion = null;
        this.fieldErrors = [];
    }

    async addSegment(kind: SegmentKind, startCs: number, endCs: number): Promise<boolean> {
        this.assertEditable();
        this.store.add(kind, startCs, endCs);
        return this.push("add");
    }

    async moveSegment(id: number, startCs: number, endCs: number): Promise<boolean> {
        this.assertEditable();
        this.store.move(id, startCs, endCs);
        return this.push("move");
    }

    async nudgeSegment(id: number, edge: "start" | "end", deltaCs: number): Promise<boolean> {
        this.assertEditable();
        this.store.nudge(id, edge, deltaCs);
        return this.push("move");
    }

    async deleteSegment(id: number): Promise<boolean> {
        this.assertEditable();
        this.store.remove(id);
        return this.push("delete");
    }

    async undo(): Promise<boolean> {
        this.assertEditable();
        if (!this.store.undo()) {
            return false;
        }
        return this.push("undo");
    }

    /** Push the current draft set as one versioned write. */
    private async push(edit: string): Promise<boolean> {
        const result = await this.api.putAnnotations(
            this.clipId,
            this.annotator,
            this.version,
            this.store.toWire(),
            edit,
        );
        if (result.ok) {
            this.version = result.version;
            this.lastWarnings = result.warnings;
            this.baseline = this.store.toWire();
            return true;
        }
        if (result.error === "version_conflict") {
            this.phase = "conflict";
            this.conflictVersion = result.currentVersion;
            return false;
        }
        if (result.error === "session_submitted") {
            this.phase = "submitted";
            return false;
        }
        // the server refused the set wholesale; fall back to its truth but
        // keep the field messages for display
        const fields = result.fields;
        await this.load();
        this.fieldErrors = fields;
        return false;
    }

    /**
     * Conflict resolution: refresh to the server's version, then replay this
     * session's net edits on top of it.
     *
     * The replay is a value-based three-way merge: segments this session
     * added since its last sync are added to the fresh server state, and
     * segments it removed are removed from it; everything the other writer
     * did independently survives.
     */
    async reloadAndReapply(): Promise<boolean> {
        if (this.phase !== "conflict") {
            return false;
        }
        const local = this.store.toWire();
        const base = this.baseline;
        await this.load();
        const serverNow = this.store.toWire();

        const baseKeys = new Set(base.map(segmentKey));
        const localKeys = new Set(local.map(segmentKey));
        const removedKeys = new Set(base.filter((s) => !localKeys.has(segmentKey(s))).map(segmentKey));
        const merged = serverNow.filter((s) => !removedKeys.has(segmentKey(s)));
        const mergedKeys = new Set(merged.map(segmentKey));
        for (const segment of local) {
            const key = segmentKey(segment);
            if (!baseKeys.has(key) && !mergedKeys.has(key)) {
                merged.push(segment);
                mergedKeys.add(key);
            }
        }

        const result = await this.api.putAnnotations(
            this.clipId,
            this.annotator,
            this.version,
            merged,
            "reapply",
        );
        if (result.ok) {
            this.version = result.version;
            this.store.loadFromWire(merged);
            this.baseline = this.store.toWire();
            this.phase = "editing";
            this.conflictVersion = null;
            return true;
        }
        return false;
    }

    /** Discard local edits and take the server state. */
    async reloadAndDiscard(): Promise<void> {
        await this.load();
    }

    async submit(): Promise<void> {
        await this.api.submit(this.clipId, this.annotator);
        this.phase = "submitted";
    }

    warnings(): string[] {
        return this.store.warnings();
    }

    private assertEditable(): void {
        if (this.phase === "submitted") {
            throw new Error("session is submitted; no further edits are accepted");
        }
    }
}

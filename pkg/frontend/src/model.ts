/**
 * Segment draft state for the annotation editor.
 *
 * All timestamps are integer hundredths of a second.  The UI never rounds
 * beyond that resolution: drags are snapped on entry, nudges move whole
 * hundredths, and wire values are derived by dividing by 100.
 */

export type SegmentKind = "speech" | "music";

export interface UiSegmentDraft {
    id: number;
    kind: SegmentKind;
    startCs: number;
    endCs: number;
    keepShort: boolean;
    selected: boolean;
}

/** Wire shape the annotation service accepts and returns. */
export interface WireSegment {
    segment_type: SegmentKind;
    start: number;
    end: number;
    keep_short?: boolean;
}

/** Snap a seconds value to the 0.01 s grid. */
export function snapToCs(seconds: number): number {
    return Math.round(seconds * 100);
}

export function csToSeconds(cs: number): number {
    return cs / 100;
}

/** Render hundredths as a fixed two-decimal seconds string, e.g. 120 -> "1.20". */
export function formatCs(cs: number): string {
    return (cs / 100).toFixed(2);
}

export function toWire(draft: UiSegmentDraft): WireSegment {
    return {
        segment_type: draft.kind,
        start: csToSeconds(draft.startCs),
        end: csToSeconds(draft.endCs),
        keep_short: draft.keepShort,
    };
}

export function fromWire(segment: WireSegment, id: number): UiSegmentDraft {
    return {
        id,
        kind: segment.segment_type,
        startCs: snapToCs(segment.start),
        endCs: snapToCs(segment.end),
        keepShort: segment.keep_short ?? false,
        selected: false,
    };
}

/** Reason a draft cannot be committed, or null when it is valid. */
export function draftProblem(startCs: number, endCs: number): string | null {
    if (!Number.isInteger(startCs) || !Number.isInteger(endCs)) {
        return "timestamps must sit on the 0.01 s grid";
    }
    if (startCs < 0) {
        return "start must be non-negative";
    }
    if (startCs >= endCs) {
        return "start must precede end";
    }
    return null;
}

/** Non-blocking warnings for overlapping same-type drafts. */
export function overlapWarnings(drafts: readonly UiSegmentDraft[]): string[] {
    const warnings: string[] = [];
    for (const kind of ["speech", "music"] as SegmentKind[]) {
        const members = drafts
            .filter((d) => d.kind === kind)
            .sort((a, b) => a.startCs - b.startCs || a.endCs - b.endCs);
        for (let i = 1; i < members.length; i++) {
            const prev = members[i - 1];
            const cur = members[i];
            if (cur.startCs < prev.endCs) {
                warnings.push(
                    `overlapping ${kind} segments [${formatCs(prev.startCs)}, ${formatCs(prev.endCs)}]` +
                        ` and [${formatCs(cur.startCs)}, ${formatCs(cur.endCs)}]`,
                );
            }
        }
    }
    return warnings;
}

export type EditEvent =
    | { type: "add"; id: number }
    | { type: "move"; id: number }
    | { type: "delete"; id: number }
    | { type: "undo" };

/**
 * Local draft set with an append-only edit log and undo.
 *
 * Every mutation snapshots the previous state so undo restores it exactly;
 * the log keeps both the original event and the undo event.
 */
export class DraftStore {
    drafts: UiSegmentDraft[] = [];
    readonly editLog: EditEvent[] = [];
    private undoStack: UiSegmentDraft[][] = [];
    private nextId = 1;

    private snapshot(): void {
        this.undoStack.push(this.drafts.map((d) => ({ ...d })));
    }

    loadFromWire(segments: readonly WireSegment[]): void {
        this.drafts = segments.map((s, index) => fromWire(s, index + 1));
        this.nextId = this.drafts.length + 1;
        this.undoStack = [];
        this.editLog.length = 0;
    }

    /** Commit a new draft; throws on start >= end (drag handles enforce this). */
    add(kind: SegmentKind, startCs: number, endCs: number, keepShort = false): UiSegmentDraft {
        const problem = draftProblem(startCs, endCs);
        if (problem) {
            throw new Error(problem);
        }
        this.snapshot();
        const draft: UiSegmentDraft = { id: this.nextId++, kind, startCs, endCs, keepShort, selected: false };
        this.drafts.push(draft);
        this.editLog.push({ type: "add", id: draft.id });
        return draft;
    }

    move(id: number, startCs: number, endCs: number): void {
        const draft = this.byId(id);
        const problem = draftProblem(startCs, endCs);
        if (problem) {
            throw new Error(problem);
        }
        this.snapshot();
        draft.startCs = startCs;
        draft.endCs = endCs;
        this.editLog.push({ type: "move", id });
    }

    /** Move one boundary by whole hundredths (keyboard nudge). */
    nudge(id: number, edge: "start" | "end", deltaCs: number): void {
        const draft = this.byId(id);
        const startCs = edge === "start" ? draft.startCs + deltaCs : draft.startCs;
        const endCs = edge === "end" ? draft.endCs + deltaCs : draft.endCs;
        this.move(id, startCs, endCs);
    }

    remove(id: number): void {
        const draft = this.byId(id);
        this.snapshot();
        this.drafts = this.drafts.filter((d) => d.id !== draft.id);
        this.editLog.push({ type: "delete", id });
    }

    undo(): boolean {
        const previous = this.undoStack.pop();
        if (!previous) {
            return false;
        }
        this.drafts = previous;
        this.editLog.push({ type: "undo" });
        return true;
    }

    warnings(): string[] {
        return overlapWarnings(this.drafts);
    }

    toWire(): WireSegment[] {
        return [...this.drafts]
            .sort((a, b) => a.kind.localeCompare(b.kind) || a.startCs - b.startCs)
            .map(toWire);
    }

    private byId(id: number): UiSegmentDraft {
        const draft = this.drafts.find((d) => d.id === id);
        if (!draft) {
            throw new Error(`no draft with id ${id}`);
        }
        return draft;
    }
}

/**
 * Timeline view transform and drag interaction state.
 *
 * Zoom and pan change rendering only: the transform maps between pixels and
 * seconds but never touches stored segment timestamps, which stay on the
 * 0.01 s grid.
 */

import { snapToCs } from "./model.js";

export class ViewTransform {
    constructor(
        public offsetSeconds = 0,
        public pxPerSecond = 100,
        public readonly durationSeconds: number = 10,
        public widthPx: number = 1000,
    ) {}

    timeToX(seconds: number): number {
        return (seconds - this.offsetSeconds) * this.pxPerSecond;
    }

    xToTime(x: number): number {
        return this.offsetSeconds + x / this.pxPerSecond;
    }

    visibleSpan(): [number, number] {
        return [this.offsetSeconds, this.offsetSeconds + this.widthPx / this.pxPerSecond];
    }

    /** Zoom by a factor keeping the time under `anchorX` fixed on screen. */
    zoomAt(factor: number, anchorX: number): void {
        const anchorTime = this.xToTime(anchorX);
        this.pxPerSecond = Math.min(20000, Math.max(10, this.pxPerSecond * factor));
        this.offsetSeconds = anchorTime - anchorX / this.pxPerSecond;
        this.clamp();
    }

    panBy(deltaPx: number): void {
        this.offsetSeconds += deltaPx / this.pxPerSecond;
        this.clamp();
    }

    private clamp(): void {
        const span = this.widthPx / this.pxPerSecond;
        const maxOffset = Math.max(0, this.durationSeconds - span);
        this.offsetSeconds = Math.min(maxOffset, Math.max(0, this.offsetSeconds));
    }
}

export interface DragSpan {
    startCs: number;
    endCs: number;
}

/** Accumulates a drag gesture into a snapped, ordered time span. */
export class DragTracker {
    private anchorCs: number | null = null;
    private latestCs: number | null = null;

    begin(view: ViewTransform, x: number): void {
        this.anchorCs = this.snap(view, x);
        this.latestCs = this.anchorCs;
    }

    update(view: ViewTransform, x: number): DragSpan | null {
        if (this.anchorCs === null) {
            return null;
        }
        this.latestCs = this.snap(view, x);
        return this.current();
    }

    /** Null when the drag collapsed to a point (start == end is not a span). */
    finish(): DragSpan | null {
        const span = this.current();
        this.anchorCs = null;
        this.latestCs = null;
        return span;
    }

    current(): DragSpan | null {
        if (this.anchorCs === null || this.latestCs === null || this.anchorCs === this.latestCs) {
            return null;
        }
        return {
            startCs: Math.min(this.anchorCs, this.latestCs),
            endCs: Math.max(this.anchorCs, this.latestCs),
        };
    }

    private snap(view: ViewTransform, x: number): number {
        const seconds = Math.min(view.durationSeconds, Math.max(0, view.xToTime(x)));
        return snapToCs(seconds);
    }
}

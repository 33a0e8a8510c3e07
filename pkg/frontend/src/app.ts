/**
 * Annotation editor wiring: paired video, waveform/spectrogram timeline,
 * drag-to-play spans, segment editing at 0.01 s, versioned saves, submit.
 */

import { ApiClient, ClipInfo } from "./api.js";
import { csToSeconds, formatCs, SegmentKind } from "./model.js";
import { SpanPlayer } from "./player.js";
import { SessionController } from "./session.js";
import { logIntensity, stft, Spectrogram } from "./stft.js";
import { DragTracker, ViewTransform } from "./timeline.js";
import { extractPeaks } from "./waveform.js";

const KIND_COLORS: Record<SegmentKind, string> = { speech: "#e4572e", music: "#2e86ab" };

interface Elements {
    clipList: HTMLSelectElement;
    annotator: HTMLInputElement;
    token: HTMLInputElement;
    video: HTMLVideoElement;
    canvas: HTMLCanvasElement;
    segmentTable: HTMLTableSectionElement;
    warnings: HTMLElement;
    status: HTMLElement;
    error: HTMLElement;
    kind: HTMLSelectElement;
    addMode: HTMLInputElement;
    playSpanButton: HTMLButtonElement;
    zoomIn: HTMLButtonElement;
    zoomOut: HTMLButtonElement;
    undoButton: HTMLButtonElement;
    submitButton: HTMLButtonElement;
    conflictBar: HTMLElement;
    reapplyButton: HTMLButtonElement;
    discardButton: HTMLButtonElement;
}

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

export class App {
    private api: ApiClient;
    private session: SessionController | null = null;
    private player: SpanPlayer | null = null;
    private view = new ViewTransform();
    private drag = new DragTracker();
    private clips: ClipInfo[] = [];
    private clip: ClipInfo | null = null;
    private peaks: { min: number; max: number }[] = [];
    private spectrogram: Spectrogram | null = null;
    private fallbackImage: HTMLImageElement | null = null;
    private selectedSpan: { startCs: number; endCs: number } | null = null;
    private mediaFailed = false;

    private readonly ui: Elements = {
        clipList: el("clip-list"),
        annotator: el("annotator"),
        token: el("token"),
        video: el("video"),
        canvas: el("timeline"),
        segmentTable: el("segment-rows"),
        warnings: el("warnings"),
        status: el("status"),
        error: el("error"),
        kind: el("kind"),
        addMode: el("add-mode"),
        playSpanButton: el("play-span"),
        zoomIn: el("zoom-in"),
        zoomOut: el("zoom-out"),
        undoButton: el("undo"),
        submitButton: el("submit"),
        conflictBar: el("conflict-bar"),
        reapplyButton: el("reapply"),
        discardButton: el("discard"),
    };

    constructor(baseUrl = "") {
        this.api = new ApiClient(baseUrl, null);
        this.bind();
    }

    async start(): Promise<void> {
        this.clips = await this.api.listClips();
        this.ui.clipList.innerHTML = "";
        for (const clip of this.clips) {
            const option = document.createElement("option");
            option.value = clip.clip_id;
            option.textContent = `${clip.clip_id} (${clip.label})`;
            this.ui.clipList.appendChild(option);
        }
        if (this.clips.length > 0) {
            await this.openClip(this.clips[0].clip_id);
        }
    }

    private bind(): void {
        this.ui.clipList.addEventListener("change", () => void this.openClip(this.ui.clipList.value));
        this.ui.annotator.addEventListener("change", () => {
            if (this.clip) void this.openClip(this.clip.clip_id);
        });
        this.ui.token.addEventListener("change", () => {
            this.api = new ApiClient("", this.ui.token.value || null);
            if (this.clip) void this.openClip(this.clip.clip_id);
        });

        const canvas = this.ui.canvas;
        canvas.addEventListener("pointerdown", (event) => {
            canvas.setPointerCapture(event.pointerId);
            this.drag.begin(this.view, event.offsetX);
        });
        canvas.addEventListener("pointermove", (event) => {
            if (event.buttons & 1) {
                const span = this.drag.update(this.view, event.offsetX);
                if (span) {
                    this.selectedSpan = span;
                    this.render();
                }
            }
        });
        canvas.addEventListener("pointerup", (event) => {
            const span = this.drag.finish();
            if (span) {
                this.selectedSpan = span;
                if (this.ui.addMode.checked && this.editable()) {
                    void this.addSelectedSpan();
                } else {
                    this.playSelectedSpan();
                }
            } else {
                // plain click: scrub
                const seconds = this.view.xToTime(event.offsetX);
                this.player?.playFrom(Math.max(0, Math.min(seconds, this.view.durationSeconds)));
            }
            this.render();
        });
        canvas.addEventListener("wheel", (event) => {
            event.preventDefault();
            this.view.zoomAt(event.deltaY < 0 ? 1.25 : 0.8, event.offsetX);
            this.render();
        });

        this.ui.zoomIn.addEventListener("click", () => {
            this.view.zoomAt(1.5, this.ui.canvas.width / 2);
            this.render();
        });
        this.ui.zoomOut.addEventListener("click", () => {
            this.view.zoomAt(1 / 1.5, this.ui.canvas.width / 2);
            this.render();
        });
        this.ui.playSpanButton.addEventListener("click", () => this.playSelectedSpan());
        this.ui.undoButton.addEventListener("click", () => void this.wrap(() => this.session!.undo()));
        this.ui.submitButton.addEventListener("click", () => void this.submit());
        this.ui.reapplyButton.addEventListener("click", () =>
            void this.wrap(() => this.session!.reloadAndReapply()),
        );
        this.ui.discardButton.addEventListener("click", () =>
            void this.wrap(async () => this.session!.reloadAndDiscard()),
        );

        document.addEventListener("keydown", (event) => {
            if (!this.session || !this.editable()) {
                return;
            }
            const selected = this.session.store.drafts.find((d) => d.selected);
            if (!selected) {
                return;
            }
            const nudge = (edge: "start" | "end", delta: number) =>
                void this.wrap(() => this.session!.nudgeSegment(selected.id, edge, delta));
            if (event.key === "ArrowLeft") {
                nudge(event.shiftKey ? "end" : "start", -1);
            } else if (event.key === "ArrowRight") {
                nudge(event.shiftKey ? "end" : "start", +1);
            } else if (event.key === "Delete" || event.key === "Backspace") {
                void this.wrap(() => this.session!.deleteSegment(selected.id));
            } else if ((event.ctrlKey || event.metaKey) && event.key === "z") {
                void this.wrap(() => this.session!.undo());
            }
        });

        this.ui.video.addEventListener("error", () => {
            this.mediaFailed = true;
            this.ui.error.textContent =
                "media failed to load; annotation is disabled for this clip";
            this.ui.error.hidden = false;
            this.render();
        });
    }

    private editable(): boolean {
        return !!this.session && this.session.phase === "editing" && !this.mediaFailed;
    }

    private async openClip(clipId: string): Promise<void> {
        const clip = this.clips.find((c) => c.clip_id === clipId);
        if (!clip) {
            return;
        }
        this.clip = clip;
        this.mediaFailed = false;
        this.ui.error.hidden = true;
        this.selectedSpan = null;
        this.view = new ViewTransform(0, this.ui.canvas.width / clip.duration_s, clip.duration_s, this.ui.canvas.width);

        this.player?.dispose();
        if (clip.media_url) {
            this.ui.video.src = clip.media_url;
            this.player = new SpanPlayer(this.ui.video);
            void this.decodeAudio(clip);
        } else {
            this.ui.video.removeAttribute("src");
            this.player = null;
            this.peaks = [];
            this.spectrogram = null;
        }

        this.session = new SessionController(
            this.api,
            clip.clip_id,
            this.ui.annotator.value || "anonymous",
        );
        try {
            await this.session.load();
        } catch (error) {
            this.ui.error.textContent = String(error);
            this.ui.error.hidden = false;
        }
        this.render();
    }

    private async decodeAudio(clip: ClipInfo): Promise<void> {
        try {
            const response = await fetch(this.api.mediaUrl(clip.clip_id));
            const encoded = await response.arrayBuffer();
            const context = new AudioContext();
            const buffer = await context.decodeAudioData(encoded);
            const samples = buffer.getChannelData(0);
            this.peaks = extractPeaks(samples, this.ui.canvas.width);
            this.spectrogram = stft(samples, buffer.sampleRate);
            this.fallbackImage = null;
            void context.close();
        } catch {
            // decoding unavailable (or too slow a machine): use a pre-rendered
            // image dropped next to the UI under spectrograms/<clip_id>.png
            this.peaks = [];
            this.spectrogram = null;
            this.loadFallbackImage(clip.clip_id);
        }
        this.render();
    }

    private loadFallbackImage(clipId: string): void {
        const image = new Image();
        image.onload = () => {
            this.fallbackImage = image;
            this.render();
        };
        image.onerror = () => {
            this.fallbackImage = null;
        };
        image.src = `spectrograms/${encodeURIComponent(clipId)}.png`;
    }

    private async addSelectedSpan(): Promise<void> {
        if (!this.session || !this.selectedSpan) {
            return;
        }
        const kind = this.ui.kind.value as SegmentKind;
        await this.wrap(() =>
            this.session!.addSegment(kind, this.selectedSpan!.startCs, this.selectedSpan!.endCs),
        );
    }

    private playSelectedSpan(): void {
        if (this.player && this.selectedSpan) {
            this.player.playSpan(
                csToSeconds(this.selectedSpan.startCs),
                csToSeconds(this.selectedSpan.endCs),
            );
        }
    }

    private async submit(): Promise<void> {
        if (!this.session) {
            return;
        }
        await this.wrap(async () => {
            await this.session!.submit();
            return true;
        });
    }

    private async wrap(action: () => Promise<boolean> | Promise<void>): Promise<void> {
        try {
            await action();
        } catch (error) {
            this.ui.error.textContent = String(error);
            this.ui.error.hidden = false;
        }
        this.render();
    }

    // -- rendering ----------------------------------------------------------

    private render(): void {
        this.renderTimeline();
        this.renderSegmentTable();
        this.renderStatus();
    }

    private renderStatus(): void {
        const session = this.session;
        if (!session) {
            this.ui.status.textContent = "no clip";
            return;
        }
        const phase = session.phase;
        this.ui.status.textContent = `clip ${session.clipId} · v${session.version} · ${phase}`;
        this.ui.submitButton.disabled = phase !== "editing";
        this.ui.undoButton.disabled = phase !== "editing";
        this.ui.addMode.disabled = phase !== "editing";
        this.ui.conflictBar.hidden = phase !== "conflict";
        if (phase === "conflict" && session.conflictVersion !== null) {
            this.ui.conflictBar.querySelector("span")!.textContent =
                `another writer moved this session to v${session.conflictVersion}`;
        }
        const warnings = [...session.warnings(), ...session.fieldErrors];
        this.ui.warnings.textContent = warnings.join(" · ");
        this.ui.warnings.hidden = warnings.length === 0;
    }

    private renderSegmentTable(): void {
        const body = this.ui.segmentTable;
        body.innerHTML = "";
        if (!this.session) {
            return;
        }
        for (const draft of this.session.store.drafts) {
            const row = document.createElement("tr");
            row.className = draft.selected ? "selected" : "";
            const swatch = `<span class="swatch" style="background:${KIND_COLORS[draft.kind]}"></span>`;
            row.innerHTML =
                `<td>${swatch}${draft.kind}</td>` +
                `<td>${formatCs(draft.startCs)}</td><td>${formatCs(draft.endCs)}</td>`;
            const actions = document.createElement("td");
            const playButton = document.createElement("button");
            playButton.textContent = "play";
            playButton.addEventListener("click", () =>
                this.player?.playSpan(csToSeconds(draft.startCs), csToSeconds(draft.endCs)),
            );
            const deleteButton = document.createElement("button");
            deleteButton.textContent = "delete";
            deleteButton.disabled = !this.editable();
            deleteButton.addEventListener("click", () =>
                void this.wrap(() => this.session!.deleteSegment(draft.id)),
            );
            actions.append(playButton, deleteButton);
            row.appendChild(actions);
            row.addEventListener("click", () => {
                for (const other of this.session!.store.drafts) {
                    other.selected = other.id === draft.id;
                }
                this.render();
            });
            body.appendChild(row);
        }
    }

    private renderTimeline(): void {
        const canvas = this.ui.canvas;
        const context = canvas.getContext("2d");
        if (!context) {
            return;
        }
        const { width, height } = canvas;
        context.clearRect(0, 0, width, height);
        const waveTop = 0;
        const waveHeight = height * 0.35;
        const specTop = waveHeight;
        const specHeight = height * 0.5;
        const laneTop = specTop + specHeight;

        this.drawSpectrogram(context, specTop, specHeight);
        this.drawWaveform(context, waveTop, waveHeight);
        this.drawSegments(context, laneTop, height - laneTop);
        if (this.selectedSpan) {
            const x0 = this.view.timeToX(csToSeconds(this.selectedSpan.startCs));
            const x1 = this.view.timeToX(csToSeconds(this.selectedSpan.endCs));
            context.fillStyle = "rgba(255, 214, 10, 0.25)";
            context.fillRect(x0, 0, x1 - x0, height);
            context.strokeStyle = "#ffd60a";
            context.strokeRect(x0, 0, x1 - x0, height);
        }
    }

    private drawWaveform(context: CanvasRenderingContext2D, top: number, height: number): void {
        if (this.peaks.length === 0 || !this.clip) {
            return;
        }
        context.fillStyle = "#9bc1bc";
        const mid = top + height / 2;
        const pxPerPeak = this.view.pxPerSecond * (this.clip.duration_s / this.peaks.length);
        const [visibleStart] = this.view.visibleSpan();
        const firstPeak = Math.floor((visibleStart / this.clip.duration_s) * this.peaks.length);
        for (let x = 0; x < this.ui.canvas.width; x++) {
            const index = firstPeak + Math.floor(x / pxPerPeak);
            const peak = this.peaks[index];
            if (!peak) {
                continue;
            }
            const y0 = mid + peak.min * (height / 2);
            const y1 = mid + peak.max * (height / 2);
            context.fillRect(x, Math.min(y0, y1), 1, Math.max(1, Math.abs(y1 - y0)));
        }
    }

    private drawSpectrogram(context: CanvasRenderingContext2D, top: number, height: number): void {
        const spec = this.spectrogram;
        if (!spec || spec.frames === 0) {
            if (this.fallbackImage && this.clip) {
                // project the pre-rendered full-clip image through the view
                const [visibleStart, visibleEnd] = this.view.visibleSpan();
                const perSecond = this.fallbackImage.width / this.clip.duration_s;
                context.drawImage(
                    this.fallbackImage,
                    visibleStart * perSecond,
                    0,
                    (visibleEnd - visibleStart) * perSecond,
                    this.fallbackImage.height,
                    0,
                    top,
                    this.ui.canvas.width,
                    height,
                );
            }
            return;
        }
        let peak = 0;
        for (let i = 0; i < spec.magnitudes.length; i++) {
            if (spec.magnitudes[i] > peak) peak = spec.magnitudes[i];
        }
        const [visibleStart, visibleEnd] = this.view.visibleSpan();
        for (let x = 0; x < this.ui.canvas.width; x++) {
            const seconds = visibleStart + (x / this.ui.canvas.width) * (visibleEnd - visibleStart);
            const frame = Math.floor(seconds / spec.hopSeconds);
            if (frame < 0 || frame >= spec.frames) {
                continue;
            }
            for (let y = 0; y < height; y++) {
                // log-frequency axis, low frequencies at the bottom
                const fraction = 1 - y / height;
                const bin = Math.min(
                    spec.bins - 1,
                    Math.floor(Math.pow(spec.bins, fraction)) - 1,
                );
                const intensity = logIntensity(
                    spec.magnitudes[frame * spec.bins + Math.max(0, bin)], peak,
                );
                if (intensity > 0.02) {
                    context.fillStyle = `rgba(46, 134, 171, ${intensity.toFixed(3)})`;
                    context.fillRect(x, top + y, 1, 1);
                }
            }
        }
    }

    private drawSegments(context: CanvasRenderingContext2D, top: number, height: number): void {
        if (!this.session) {
            return;
        }
        const laneHeight = height / 2;
        for (const draft of this.session.store.drafts) {
            const lane = draft.kind === "speech" ? 0 : 1;
            const x0 = this.view.timeToX(csToSeconds(draft.startCs));
            const x1 = this.view.timeToX(csToSeconds(draft.endCs));
            context.fillStyle = KIND_COLORS[draft.kind] + (draft.selected ? "ff" : "99");
            context.fillRect(x0, top + lane * laneHeight + 2, Math.max(2, x1 - x0), laneHeight - 4);
        }
    }
}

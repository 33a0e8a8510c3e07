/** Span-restricted playback over an HTMLMediaElement-compatible object. */

export interface MediaLike {
    currentTime: number;
    play(): Promise<void> | void;
    pause(): void;
    addEventListener(type: string, listener: () => void): void;
    removeEventListener(type: string, listener: () => void): void;
}

export class SpanPlayer {
    private stopAt: number | null = null;
    private readonly onTimeUpdate = () => {
        if (this.stopAt !== null && this.media.currentTime >= this.stopAt) {
            this.stop();
        }
    };

    constructor(private readonly media: MediaLike) {
        media.addEventListener("timeupdate", this.onTimeUpdate);
    }

    /** Seek to `startSeconds` and play until `endSeconds`, then pause there. */
    playSpan(startSeconds: number, endSeconds: number): void {
        this.media.currentTime = startSeconds;
        this.stopAt = endSeconds;
        void this.media.play();
    }

    playFrom(seconds: number): void {
        this.media.currentTime = seconds;
        this.stopAt = null;
        void this.media.play();
    }

    stop(): void {
        this.media.pause();
        if (this.stopAt !== null) {
            this.media.currentTime = this.stopAt;
        }
        this.stopAt = null;
    }

    dispose(): void {
        this.media.removeEventListener("timeupdate", this.onTimeUpdate);
    }
}

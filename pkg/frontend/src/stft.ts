/**
 * Short-time magnitude spectra for the client-side spectrogram.
 *
 * Plain radix-2 FFT; good enough for rendering a few thousand frames of a
 * ten-second clip without pulling in a DSP dependency.
 */

export function hannWindow(size: number): Float32Array {
    const window = new Float32Array(size);
    for (let i = 0; i < size; i++) {
        window[i] = 0.5 * (1 - Math.cos((2 * Math.PI * i) / size));
    }
    return window;
}

/** In-place iterative radix-2 FFT over interleaved re/im pairs. */
export function fftRadix2(re: Float64Array, im: Float64Array): void {
    const n = re.length;
    if ((n & (n - 1)) !== 0) {
        throw new Error(`FFT size must be a power of two, got ${n}`);
    }
    for (let i = 1, j = 0; i < n; i++) {
        let bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            [re[i], re[j]] = [re[j], re[i]];
            [im[i], im[j]] = [im[j], im[i]];
        }
    }
    for (let len = 2; len <= n; len <<= 1) {
        const angle = (-2 * Math.PI) / len;
        const wRe = Math.cos(angle);
        const wIm = Math.sin(angle);
        for (let i = 0; i < n; i += len) {
            let curRe = 1;
            let curIm = 0;
            for (let k = 0; k < len / 2; k++) {
                const evenRe = re[i + k];
                const evenIm = im[i + k];
                const oddRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
                const oddIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
                re[i + k] = evenRe + oddRe;
                im[i + k] = evenIm + oddIm;
                re[i + k + len / 2] = evenRe - oddRe;
                im[i + k + len / 2] = evenIm - oddIm;
                const nextRe = curRe * wRe - curIm * wIm;
                curIm = curRe * wIm + curIm * wRe;
                curRe = nextRe;
            }
        }
    }
}

export interface Spectrogram {
    /** frames x bins magnitudes, row-major */
    magnitudes: Float32Array;
    frames: number;
    bins: number;
    hopSeconds: number;
    binHz: number;
}

export function stft(
    samples: Float32Array,
    sampleRate: number,
    fftSize = 512,
    hop = 256,
): Spectrogram {
    const window = hannWindow(fftSize);
    const frames = Math.max(0, Math.floor((samples.length - fftSize) / hop) + 1);
    const bins = fftSize / 2;
    const magnitudes = new Float32Array(frames * bins);
    const re = new Float64Array(fftSize);
    const im = new Float64Array(fftSize);
    for (let frame = 0; frame < frames; frame++) {
        const offset = frame * hop;
        for (let i = 0; i < fftSize; i++) {
            re[i] = samples[offset + i] * window[i];
            im[i] = 0;
        }
        fftRadix2(re, im);
        for (let bin = 0; bin < bins; bin++) {
            magnitudes[frame * bins + bin] = Math.hypot(re[bin], im[bin]);
        }
    }
    return { magnitudes, frames, bins, hopSeconds: hop / sampleRate, binHz: sampleRate / fftSize };
}

/** Map a magnitude to [0, 1] on a log scale with a fixed dynamic range. */
export function logIntensity(magnitude: number, peak: number, rangeDb = 80): number {
    if (peak <= 0 || magnitude <= 0) {
        return 0;
    }
    const db = 20 * Math.log10(magnitude / peak);
    return Math.min(1, Math.max(0, 1 + db / rangeDb));
}

/** Min/max peak extraction for waveform rendering. */

export interface PeakPair {
    min: number;
    max: number;
}

export function extractPeaks(samples: Float32Array, buckets: number): PeakPair[] {
    const peaks: PeakPair[] = [];
    if (buckets <= 0 || samples.length === 0) {
        return peaks;
    }
    const perBucket = samples.length / buckets;
    for (let b = 0; b < buckets; b++) {
        const start = Math.floor(b * perBucket);
        const end = Math.min(samples.length, Math.max(start + 1, Math.floor((b + 1) * perBucket)));
        let min = samples[start];
        let max = samples[start];
        for (let i = start + 1; i < end; i++) {
            if (samples[i] < min) min = samples[i];
            if (samples[i] > max) max = samples[i];
        }
        peaks.push({ min, max });
    }
    return peaks;
}

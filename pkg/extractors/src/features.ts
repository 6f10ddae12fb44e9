/**
 * Per-frame audio features at the animation frame rate (25 fps).
 *
 * The deterministic DSP backend computes log-mel filterbank energies
 * over 40 ms bins, matching the frame alignment the engine expects.
 * Model-backed encoders plug in behind the same AudioEncoder interface;
 * their 50 Hz outputs are mean-pooled into the same 40 ms bins.
 */

import type { AudioClip } from "./wav.js";

export interface AudioEncoder {
  /** Per-frame features at `fps`; shape [T][dim]. */
  encode(clip: AudioClip, fps: number): Float32Array[];
  readonly dim: number;
  readonly name: string;
}

/** Iterative radix-2 FFT; returns interleaved re/im of length 2n. */
export function fft(re: Float32Array, im: Float32Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) throw new Error("fft size must be a power of two");
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang), wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1, curIm = 0;
      for (let j = 0; j < len / 2; j++) {
        const aRe = re[i + j], aIm = im[i + j];
        const bRe = re[i + j + len / 2] * curRe - im[i + j + len / 2] * curIm;
        const bIm = re[i + j + len / 2] * curIm + im[i + j + len / 2] * curRe;
        re[i + j] = aRe + bRe;
        im[i + j] = aIm + bIm;
        re[i + j + len / 2] = aRe - bRe;
        im[i + j + len / 2] = aIm - bIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

function hzToMel(hz: number): number {
  return 2595 * Math.log10(1 + hz / 700);
}

function melToHz(mel: number): number {
  return 700 * (Math.pow(10, mel / 2595) - 1);
}

export function melFilterbank(
  nFilters: number, fftSize: number, sampleRate: number, fMin = 50, fMax?: number,
): Float32Array[] {
  const top = fMax ?? sampleRate / 2;
  const melPoints = new Array(nFilters + 2)
    .fill(0)
    .map((_, i) => hzToMel(fMin) + ((hzToMel(top) - hzToMel(fMin)) * i) / (nFilters + 1));
  const bins = melPoints.map((m) => Math.floor(((fftSize + 1) * melToHz(m)) / sampleRate));
  const bank: Float32Array[] = [];
  for (let f = 1; f <= nFilters; f++) {
    const filt = new Float32Array(fftSize / 2 + 1);
    for (let b = bins[f - 1]; b < bins[f]; b++) {
      if (b >= 0 && b < filt.length && bins[f] !== bins[f - 1]) {
        filt[b] = (b - bins[f - 1]) / (bins[f] - bins[f - 1]);
      }
    }
    for (let b = bins[f]; b < bins[f + 1]; b++) {
      if (b >= 0 && b < filt.length && bins[f + 1] !== bins[f]) {
        filt[b] = (bins[f + 1] - b) / (bins[f + 1] - bins[f]);
      }
    }
    bank.push(filt);
  }
  return bank;
}

/** Log-mel filterbank energies over one 40 ms bin per output frame. */
export class LogMelEncoder implements AudioEncoder {
  readonly name = "logmel-dsp";
  private readonly fftSize = 1024;

  constructor(readonly dim: number = 768) {}

  encode(clip: AudioClip, fps: number): Float32Array[] {
    const { samples, sampleRate } = clip;
    const hop = sampleRate / fps;
    const nFrames = Math.max(1, Math.round(samples.length / hop));
    const bank = melFilterbank(this.dim, this.fftSize, sampleRate);
    const frames: Float32Array[] = [];
    const re = new Float32Array(this.fftSize);
    const im = new Float32Array(this.fftSize);
    for (let t = 0; t < nFrames; t++) {
      const start = Math.round(t * hop);
      re.fill(0);
      im.fill(0);
      const len = Math.min(this.fftSize, Math.max(0, samples.length - start));
      for (let i = 0; i < len; i++) {
        // Hann window over the analysis span
        const w = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (this.fftSize - 1));
        re[i] = samples[start + i] * w;
      }
      fft(re, im);
      const power = new Float32Array(this.fftSize / 2 + 1);
      for (let b = 0; b < power.length; b++) power[b] = re[b] * re[b] + im[b] * im[b];
      const feat = new Float32Array(this.dim);
      for (let f = 0; f < this.dim; f++) {
        let acc = 0;
        const filt = bank[f];
        for (let b = 0; b < filt.length; b++) acc += filt[b] * power[b];
        feat[f] = Math.log(acc + 1e-10);
      }
      frames.push(feat);
    }
    return frames;
  }
}

/** Mean-pool encoder frames into target-fps bins (e.g. 50 Hz -> 25 fps). */
export function meanPoolToFps(
  frames: Float32Array[], sourceFps: number, targetFps: number,
): Float32Array[] {
  if (frames.length === 0) return [];
  const dim = frames[0].length;
  const ratio = sourceFps / targetFps;
  const out: Float32Array[] = [];
  const nOut = Math.max(1, Math.round(frames.length / ratio));
  for (let t = 0; t < nOut; t++) {
    const lo = Math.round(t * ratio);
    const hi = Math.min(frames.length, Math.max(lo + 1, Math.round((t + 1) * ratio)));
    const acc = new Float32Array(dim);
    for (let i = lo; i < hi; i++) {
      for (let d = 0; d < dim; d++) acc[d] += frames[i][d];
    }
    for (let d = 0; d < dim; d++) acc[d] /= hi - lo;
    out.push(acc);
  }
  return out;
}

/** Trim or edge-pad to an expected frame count; beyond ±tolerance is an error. */
export function alignFrameCount(
  frames: Float32Array[], expected: number, tolerance = 1,
): Float32Array[] {
  const diff = frames.length - expected;
  if (Math.abs(diff) > tolerance) {
    throw new Error(`frame count ${frames.length} is ${diff} off expected ${expected}`);
  }
  if (diff > 0) return frames.slice(0, expected);
  if (diff < 0) {
    const pad = new Array(-diff).fill(null).map(() => Float32Array.from(frames[frames.length - 1]));
    return frames.concat(pad);
  }
  return frames;
}

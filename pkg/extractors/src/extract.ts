/**
 * Orchestrates one clip: WAV -> 25 fps audio-feature PAF + transcript
 * embedding PAF + a manifest fragment matching the engine's record
 * schema. Output dims are whatever the configured encoders produce; the
 * PAF headers self-describe them.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { alignFrameCount, AudioEncoder, LogMelEncoder } from "./features.js";
import { NamedArray, writePaf } from "./paf.js";
import { EmbeddingMode, HashTextEncoder, SidecarTranscriber, TextEncoder, Transcriber, embedTranscript } from "./text.js";
import { readWav } from "./wav.js";

export interface ExtractorConfig {
  audioModel: string;       // e.g. "mhubert-147" when a model backend is wired
  asrModel: string;         // e.g. "whisper-large-v3"
  textModel: string;        // e.g. "clip-vit-b-32"
  fps: number;              // animation frame rate, 25
  resampling: "mean_pool_40ms";
  tHatMode: EmbeddingMode;
  audioDim: number;
  clipDim: number;
  whisperDim: number;
}

export const DEFAULT_CONFIG: ExtractorConfig = {
  audioModel: "logmel-dsp",
  asrModel: "sidecar",
  textModel: "hash-clip",
  fps: 25,
  resampling: "mean_pool_40ms",
  tHatMode: "clip_only",
  audioDim: 768,
  clipDim: 512,
  whisperDim: 384,
};

export interface Backends {
  audio: AudioEncoder;
  transcriber: Transcriber;
  clip: TextEncoder;
  whisper: TextEncoder;
}

export function defaultBackends(config: ExtractorConfig): Backends {
  return {
    audio: new LogMelEncoder(config.audioDim),
    transcriber: new SidecarTranscriber(),
    clip: new HashTextEncoder(config.clipDim, "clip"),
    whisper: new HashTextEncoder(config.whisperDim, "whisper"),
  };
}

export interface ManifestFragment {
  id: string;
  language: string;
  speaker: string;
  n_frames: number;
  fps: number;
  audio_feats: string;
  t_hat: string;
  transcript: string;
  warnings: string[];
}

export interface ExtractOptions {
  id: string;
  language?: string;
  speaker?: string;
  /** paired expression frame count; features are trimmed/padded to match (±1) */
  expectedFrames?: number;
}

export function extractClip(
  wavPath: string,
  outDir: string,
  options: ExtractOptions,
  config: ExtractorConfig = DEFAULT_CONFIG,
  backends: Backends = defaultBackends(config),
): ManifestFragment {
  mkdirSync(outDir, { recursive: true });
  const warnings: string[] = [];

  const clip = readWav(wavPath);
  let frames = backends.audio.encode(clip, config.fps);
  if (options.expectedFrames !== undefined) {
    frames = alignFrameCount(frames, options.expectedFrames, 1);
  }
  for (const f of frames) {
    for (const v of f) {
      if (!Number.isFinite(v)) throw new Error(`non-finite audio feature in ${wavPath}`);
    }
  }

  const transcript = backends.transcriber.transcribe(wavPath);
  if (transcript.length === 0) {
    warnings.push("empty transcript: embedding of empty string emitted");
  }
  const tHat = embedTranscript(transcript, config.tHatMode, backends.clip, backends.whisper);

  const dim = backends.audio.dim;
  const flat = new Float32Array(frames.length * dim);
  frames.forEach((f, t) => flat.set(f, t * dim));
  const audioArrays: NamedArray[] = [
    { name: "audio_feats", dims: [frames.length, dim], data: flat },
    { name: "fps", dims: [], data: Float32Array.of(config.fps) },
  ];
  const audioRel = `${options.id}_audio.paf`;
  const tHatRel = `${options.id}_that.paf`;
  writePaf(join(outDir, audioRel), audioArrays);
  writePaf(join(outDir, tHatRel), [{ name: "t_hat", dims: [tHat.length], data: tHat }]);

  const fragment: ManifestFragment = {
    id: options.id,
    language: options.language ?? "und",
    speaker: options.speaker ?? "unknown",
    n_frames: frames.length,
    fps: config.fps,
    audio_feats: audioRel,
    t_hat: tHatRel,
    transcript,
    warnings,
  };
  writeFileSync(join(outDir, `${options.id}_fragment.json`), JSON.stringify(fragment, null, 1));
  return fragment;
}

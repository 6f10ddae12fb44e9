/**
 * Transcription and transcript embedding.
 *
 * Both stages sit behind interfaces so pretrained models (an ASR model
 * for transcripts, a text encoder for embeddings) can plug in where
 * their runtimes are available. The built-in backends are fully
 * deterministic: transcripts come from a sidecar text file placed next
 * to the audio, and embeddings from a seeded token-hash projection that
 * preserves the wire format (a single fixed-width vector whose
 * dimensions the PAF header self-describes).
 */

import { existsSync, readFileSync } from "node:fs";

export interface Transcriber {
  transcribe(wavPath: string): string;
  readonly name: string;
}

export interface TextEncoder {
  embed(text: string): Float32Array;
  readonly dim: number;
  readonly name: string;
}

/** Reads `<clip>.txt` next to the audio; missing file -> empty transcript. */
export class SidecarTranscriber implements Transcriber {
  readonly name = "sidecar";

  transcribe(wavPath: string): string {
    const txt = wavPath.replace(/\.[^.]+$/, "") + ".txt";
    if (!existsSync(txt)) return "";
    return readFileSync(txt, "utf-8").trim();
  }
}

function fnv1a64(s: string): bigint {
  let h = 0xcbf29ce484222325n;
  const bytes = Buffer.from(s, "utf-8");
  for (const b of bytes) {
    h ^= BigInt(b);
    h = (h * 0x100000001b3n) & 0xffffffffffffffffn;
  }
  return h;
}

/**
 * Deterministic sentence embedding: each token hashes to a handful of
 * signed coordinates; the sum is L2-normalized. Tokens keep their
 * native script, so different scripts land in distinct subspaces, the
 * property the conditioning relies on.
 */
export class HashTextEncoder implements TextEncoder {
  readonly name: string;

  constructor(readonly dim: number = 512, private readonly salt: string = "clip") {
    this.name = `hash-${salt}`;
  }

  embed(text: string): Float32Array {
    const out = new Float32Array(this.dim);
    const tokens = text.normalize("NFKC").toLowerCase().split(/\s+/).filter((t) => t.length > 0);
    for (const token of tokens) {
      let h = fnv1a64(`${this.salt}:${token}`);
      for (let k = 0; k < 4; k++) {
        const idx = Number(h % BigInt(this.dim));
        h /= BigInt(this.dim);
        const sign = h % 2n === 0n ? 1 : -1;
        h /= 2n;
        out[idx] += sign;
      }
    }
    let norm = 0;
    for (const v of out) norm += v * v;
    if (norm > 0) {
      const inv = 1 / Math.sqrt(norm);
      for (let i = 0; i < this.dim; i++) out[i] *= inv;
    }
    return out;
  }
}

export type EmbeddingMode = "clip_only" | "whisper_concat_clip";

/** Sentence embedding per the configured mode; concat doubles the header dim. */
export function embedTranscript(
  text: string, mode: EmbeddingMode, clipEncoder: TextEncoder, whisperEncoder: TextEncoder,
): Float32Array {
  const clip = clipEncoder.embed(text);
  if (mode === "clip_only") return clip;
  const whisper = whisperEncoder.embed(text);
  const out = new Float32Array(whisper.length + clip.length);
  out.set(whisper, 0);
  out.set(clip, whisper.length);
  return out;
}

import { execFileSync } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { DEFAULT_CONFIG, extractClip } from "../src/extract.js";
import { readPaf } from "../src/paf.js";
import { encodeWav } from "../src/wav.js";

function makeClipDir(seconds = 3.0, transcript?: string): { dir: string; wav: string } {
  const dir = mkdtempSync(join(tmpdir(), "extract-"));
  const sampleRate = 16000;
  const n = Math.round(seconds * sampleRate);
  const samples = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    samples[i] =
      0.4 * Math.sin((2 * Math.PI * 300 * i) / sampleRate) +
      0.2 * Math.sin((2 * Math.PI * 1200 * i) / sampleRate);
  }
  const wav = join(dir, "clip.wav");
  writeFileSync(wav, encodeWav({ samples, sampleRate }));
  if (transcript !== undefined) writeFileSync(join(dir, "clip.txt"), transcript);
  return { dir, wav };
}

const TOY = { ...DEFAULT_CONFIG, audioDim: 24, clipDim: 16, whisperDim: 8 };

function checksum(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

describe("extractClip", () => {
  it("turns a 3 s clip into exactly 75 feature frames at 25 fps", () => {
    const { dir, wav } = makeClipDir(3.0, "hello there");
    const fragment = extractClip(wav, join(dir, "out"), { id: "c0" }, TOY);
    expect(fragment.n_frames).toBe(75);
    expect(fragment.fps).toBe(25);
    const arrays = readPaf(join(dir, "out", "c0_audio.paf"));
    const audio = arrays.find((a) => a.name === "audio_feats")!;
    expect(audio.dims).toEqual([75, 24]);
    const fps = arrays.find((a) => a.name === "fps")!;
    expect(Array.from(fps.data)).toEqual([25]);
  });

  it("is checksum-stable across repeated runs", () => {
    const { dir, wav } = makeClipDir(2.0, "ciao mondo");
    const a = join(dir, "a");
    const b = join(dir, "b");
    extractClip(wav, a, { id: "c1" }, TOY);
    extractClip(wav, b, { id: "c1" }, TOY);
    for (const name of ["c1_audio.paf", "c1_that.paf"]) {
      expect(checksum(join(a, name))).toBe(checksum(join(b, name)));
    }
  });

  it("emits files the engine's codec validates", () => {
    const { dir, wav } = makeClipDir(1.0, "bonjour");
    const out = join(dir, "out");
    extractClip(wav, out, { id: "c2" }, TOY);
    const script = [
      "import sys",
      "from facediff.conditioning import load_features",
      "audio, t_hat = load_features(sys.argv[1], sys.argv[2])",
      "print(audio.feats.shape[0], audio.feats.shape[1], t_hat.dim, audio.fps)",
    ].join("\n");
    const printed = execFileSync(
      "python3",
      ["-c", script, join(out, "c2_audio.paf"), join(out, "c2_that.paf")],
      { encoding: "utf-8" },
    ).trim();
    expect(printed).toBe("25 24 16 25");
  });

  it("records the transcript and matches the manifest schema", () => {
    const { dir, wav } = makeClipDir(1.0, "Привет мир");
    const fragment = extractClip(wav, join(dir, "out"), {
      id: "c3", language: "ru", speaker: "spk1",
    }, TOY);
    expect(fragment.transcript).toBe("Привет мир");
    expect(fragment.language).toBe("ru");
    const onDisk = JSON.parse(readFileSync(join(dir, "out", "c3_fragment.json"), "utf-8"));
    expect(onDisk).toEqual(fragment);
    expect(fragment.warnings).toEqual([]);
  });

  it("warns on empty transcripts but still embeds", () => {
    const { dir, wav } = makeClipDir(1.0); // no sidecar text
    const fragment = extractClip(wav, join(dir, "out"), { id: "c4" }, TOY);
    expect(fragment.transcript).toBe("");
    expect(fragment.warnings.some((w) => w.includes("empty transcript"))).toBe(true);
    const tHat = readPaf(join(dir, "out", "c4_that.paf"))[0];
    expect(tHat.dims).toEqual([16]);
  });

  it("concat mode widens the embedding header", () => {
    const { dir, wav } = makeClipDir(1.0, "hola");
    const config = { ...TOY, tHatMode: "whisper_concat_clip" as const };
    extractClip(wav, join(dir, "out"), { id: "c5" }, config);
    const tHat = readPaf(join(dir, "out", "c5_that.paf"))[0];
    expect(tHat.dims).toEqual([8 + 16]);
  });

  it("aligns to a paired frame count within one frame", () => {
    const { dir, wav } = makeClipDir(3.0, "x");
    const fragment = extractClip(wav, join(dir, "out"), { id: "c6", expectedFrames: 74 }, TOY);
    expect(fragment.n_frames).toBe(74);
    expect(() =>
      extractClip(wav, join(dir, "out2"), { id: "c7", expectedFrames: 70 }, TOY),
    ).toThrowError(/frame count/);
  });

  it("different scripts produce distinct embeddings", () => {
    const { dir, wav } = makeClipDir(1.0, "hello world");
    const other = makeClipDir(1.0, "こんにちは 世界");
    extractClip(wav, join(dir, "out"), { id: "a" }, TOY);
    extractClip(other.wav, join(other.dir, "out"), { id: "b" }, TOY);
    const ea = readPaf(join(dir, "out", "a_that.paf"))[0].data;
    const eb = readPaf(join(other.dir, "out", "b_that.paf"))[0].data;
    let dot = 0;
    for (let i = 0; i < ea.length; i++) dot += ea[i] * eb[i];
    expect(Math.abs(dot)).toBeLessThan(0.9); // far from identical directions
  });
});

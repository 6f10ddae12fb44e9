/**
 * Minimal RIFF/WAVE reader and writer. Supports PCM 16/32-bit and
 * IEEE float 32-bit; multi-channel input is averaged down to mono.
 */

import { readFileSync } from "node:fs";

export interface AudioClip {
  samples: Float32Array; // mono, [-1, 1]
  sampleRate: number;
}

export class WavError extends Error {}

export function decodeWav(buf: Buffer): AudioClip {
  if (buf.length < 44 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new WavError("not a RIFF/WAVE file");
  }
  let off = 12;
  let format = 0, channels = 0, sampleRate = 0, bitsPerSample = 0;
  let dataStart = -1, dataLen = 0;
  while (off + 8 <= buf.length) {
    const id = buf.toString("ascii", off, off + 4);
    const size = buf.readUInt32LE(off + 4);
    const body = off + 8;
    if (id === "fmt ") {
      format = buf.readUInt16LE(body);
      channels = buf.readUInt16LE(body + 2);
      sampleRate = buf.readUInt32LE(body + 4);
      bitsPerSample = buf.readUInt16LE(body + 14);
    } else if (id === "data") {
      dataStart = body;
      dataLen = size;
    }
    off = body + size + (size % 2);
  }
  if (dataStart < 0) throw new WavError("missing data chunk");
  if (channels < 1 || sampleRate <= 0) throw new WavError("malformed fmt chunk");
  const end = Math.min(dataStart + dataLen, buf.length);

  let read: (i: number) => number;
  let bytes: number;
  if (format === 1 && bitsPerSample === 16) {
    bytes = 2;
    read = (i) => buf.readInt16LE(i) / 32768;
  } else if (format === 1 && bitsPerSample === 32) {
    bytes = 4;
    read = (i) => buf.readInt32LE(i) / 2147483648;
  } else if (format === 3 && bitsPerSample === 32) {
    bytes = 4;
    read = (i) => buf.readFloatLE(i);
  } else {
    throw new WavError(`unsupported format ${format} / ${bitsPerSample}-bit`);
  }
  const frames = Math.floor((end - dataStart) / (bytes * channels));
  const samples = new Float32Array(frames);
  for (let f = 0; f < frames; f++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += read(dataStart + (f * channels + c) * bytes);
    samples[f] = acc / channels;
  }
  return { samples, sampleRate };
}

export function readWav(path: string): AudioClip {
  return decodeWav(readFileSync(path));
}

export function encodeWav(clip: AudioClip): Buffer {
  const n = clip.samples.length;
  const buf = Buffer.alloc(44 + 2 * n);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + 2 * n, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20);       // PCM
  buf.writeUInt16LE(1, 22);       // mono
  buf.writeUInt32LE(clip.sampleRate, 24);
  buf.writeUInt32LE(clip.sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(2 * n, 40);
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, clip.samples[i]));
    buf.writeInt16LE(Math.round(v * 32767), 44 + 2 * i);
  }
  return buf;
}

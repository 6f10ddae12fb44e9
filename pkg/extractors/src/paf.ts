/**
 * PAF writer/reader, byte-compatible with the engine's codec.
 *
 * Layout (all integers unsigned 32-bit little-endian):
 *   magic "PAF1" | count | per entry:
 *   name_len | name utf-8 | dtype (1 = float32) | rank | dims... | payload
 * Payload is row-major little-endian float32.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "PAF1";
export const DTYPE_FLOAT32 = 1;
export const MAX_RANK = 3;

export interface NamedArray {
  name: string;
  dims: number[];
  data: Float32Array;
}

export class PafError extends Error {
  constructor(message: string, public readonly offset: number) {
    super(`${message} (at byte ${offset})`);
  }
}

export function encodePaf(arrays: NamedArray[]): Buffer {
  const names = new Set<string>();
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(8);
  head.write(MAGIC, 0, "ascii");
  head.writeUInt32LE(arrays.length, 4);
  chunks.push(head);
  for (const { name, dims, data } of arrays) {
    if (names.has(name)) throw new Error(`duplicate array name ${name}`);
    names.add(name);
    if (dims.length > MAX_RANK) throw new Error(`${name}: rank ${dims.length} > ${MAX_RANK}`);
    const size = dims.reduce((a, b) => a * b, 1);
    if (size !== data.length) {
      throw new Error(`${name}: dims ${dims} do not match length ${data.length}`);
    }
    const nameBytes = Buffer.from(name, "utf-8");
    const header = Buffer.alloc(4 + nameBytes.length + 8 + 4 * dims.length);
    let off = 0;
    header.writeUInt32LE(nameBytes.length, off); off += 4;
    nameBytes.copy(header, off); off += nameBytes.length;
    header.writeUInt32LE(DTYPE_FLOAT32, off); off += 4;
    header.writeUInt32LE(dims.length, off); off += 4;
    for (const d of dims) { header.writeUInt32LE(d, off); off += 4; }
    chunks.push(header);
    const payload = Buffer.alloc(4 * data.length);
    for (let i = 0; i < data.length; i++) payload.writeFloatLE(data[i], 4 * i);
    chunks.push(payload);
  }
  return Buffer.concat(chunks);
}

export function decodePaf(buf: Buffer): NamedArray[] {
  if (buf.subarray(0, 4).toString("ascii") !== MAGIC) {
    throw new PafError(`bad magic ${buf.subarray(0, 4).toString("hex")}`, 0);
  }
  let off = 4;
  const u32 = (what: string): number => {
    if (off + 4 > buf.length) throw new PafError(`truncated ${what}`, off);
    const v = buf.readUInt32LE(off);
    off += 4;
    return v;
  };
  const count = u32("entry count");
  const out: NamedArray[] = [];
  const seen = new Set<string>();
  for (let i = 0; i < count; i++) {
    const nameLen = u32("name length");
    if (off + nameLen > buf.length) throw new PafError("truncated name", off);
    const name = buf.subarray(off, off + nameLen).toString("utf-8");
    off += nameLen;
    if (seen.has(name)) throw new PafError(`duplicate name ${name}`, off);
    seen.add(name);
    const dtype = u32("dtype code");
    if (dtype !== DTYPE_FLOAT32) throw new PafError(`unsupported dtype code ${dtype}`, off - 4);
    const rank = u32("rank");
    if (rank > MAX_RANK) throw new PafError(`rank ${rank} > ${MAX_RANK}`, off - 4);
    const dims: number[] = [];
    for (let r = 0; r < rank; r++) dims.push(u32("dim"));
    const size = dims.reduce((a, b) => a * b, 1);
    if (off + 4 * size > buf.length) throw new PafError(`truncated payload for ${name}`, off);
    const data = new Float32Array(size);
    for (let j = 0; j < size; j++) data[j] = buf.readFloatLE(off + 4 * j);
    off += 4 * size;
    out.push({ name, dims, data });
  }
  if (off !== buf.length) throw new PafError(`${buf.length - off} trailing bytes`, off);
  return out;
}

export function writePaf(path: string, arrays: NamedArray[]): void {
  writeFileSync(path, encodePaf(arrays));
}

export function readPaf(path: string): NamedArray[] {
  return decodePaf(readFileSync(path));
}

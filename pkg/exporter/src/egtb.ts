/**
 * EGTB binary embedding tables.
 *
 * Layout: magic "EGTB", u32 LE version (=1), u32 LE dim, u64 LE entry count,
 * then per entry: u32 LE key byte-length, UTF-8 key bytes, dim little-endian
 * float32 values.
 */

import { promises as fs } from "node:fs";
import { dirname, join } from "node:path";
import { randomBytes } from "node:crypto";

export const EGTB_MAGIC = Buffer.from("EGTB", "ascii");
export const EGTB_VERSION = 1;

export interface EgtbEntry {
  key: string;
  vector: Float32Array;
}

export function encodeEgtb(dim: number, entries: EgtbEntry[]): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(20);
  EGTB_MAGIC.copy(header, 0);
  header.writeUInt32LE(EGTB_VERSION, 4);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(entries.length), 12);
  chunks.push(header);
  for (const { key, vector } of entries) {
    if (vector.length !== dim) {
      throw new Error(`entry ${JSON.stringify(key)} has ${vector.length} values, table dim is ${dim}`);
    }
    const keyBytes = Buffer.from(key, "utf-8");
    const len = Buffer.alloc(4);
    len.writeUInt32LE(keyBytes.length, 0);
    chunks.push(len, keyBytes);
    const vec = Buffer.alloc(dim * 4);
    for (let i = 0; i < dim; i++) vec.writeFloatLE(vector[i], i * 4);
    chunks.push(vec);
  }
  return Buffer.concat(chunks);
}

export function decodeEgtb(blob: Buffer): { dim: number; entries: EgtbEntry[] } {
  if (blob.length < 20) throw new Error("file too short for an EGTB header");
  if (!blob.subarray(0, 4).equals(EGTB_MAGIC)) {
    throw new Error(`bad magic ${JSON.stringify(blob.subarray(0, 4).toString("latin1"))}`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== EGTB_VERSION) throw new Error(`unsupported version ${version}`);
  const dim = blob.readUInt32LE(8);
  const count = Number(blob.readBigUInt64LE(12));
  let off = 20;
  const entries: EgtbEntry[] = [];
  const seen = new Set<string>();
  for (let i = 0; i < count; i++) {
    if (off + 4 > blob.length) throw new Error(`truncated at entry ${i} (key length)`);
    const keyLen = blob.readUInt32LE(off);
    off += 4;
    if (off + keyLen + dim * 4 > blob.length) throw new Error(`truncated at entry ${i} (payload)`);
    const key = blob.subarray(off, off + keyLen).toString("utf-8");
    off += keyLen;
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) vector[j] = blob.readFloatLE(off + j * 4);
    off += dim * 4;
    if (seen.has(key)) throw new Error(`duplicate key ${JSON.stringify(key)}`);
    seen.add(key);
    entries.push({ key, vector });
  }
  if (off !== blob.length) throw new Error(`${blob.length - off} trailing bytes after last entry`);
  return { dim, entries };
}

/** Write atomically: temp file in the target directory, then rename. */
export async function writeEgtbFile(path: string, dim: number, entries: EgtbEntry[]): Promise<void> {
  const blob = encodeEgtb(dim, entries);
  const tmp = join(dirname(path), `.egtb-${randomBytes(6).toString("hex")}.tmp`);
  await fs.writeFile(tmp, blob);
  await fs.rename(tmp, path);
}

export async function readEgtbFile(path: string): Promise<{ dim: number; entries: EgtbEntry[] }> {
  return decodeEgtb(await fs.readFile(path));
}

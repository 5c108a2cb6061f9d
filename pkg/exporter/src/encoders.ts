/**
 * Text and image encoders behind one interface.
 *
 * The hashing encoders are fully deterministic and dependency-free, so the
 * exporter works offline; model encoders (sentence transformers / joint
 * text-image models via @huggingface/transformers) load lazily and only when
 * requested. Every encoder output is L2-normalized before it reaches a table.
 */

import { createHash } from "node:crypto";
import { promises as fs } from "node:fs";

export const TEXT_DIMS = [384, 768] as const;

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encodeText(text: string): Promise<Float32Array>;
  encodeImage(path: string): Promise<Float32Array>;
}

export function l2Normalize(vec: Float32Array): Float32Array {
  let sq = 0;
  for (const v of vec) sq += v * v;
  const norm = Math.sqrt(sq);
  if (norm === 0) {
    const out = new Float32Array(vec.length);
    out[0] = 1;
    return out;
  }
  const out = new Float32Array(vec.length);
  for (let i = 0; i < vec.length; i++) out[i] = vec[i] / norm;
  return out;
}

function bucketOf(digest: Buffer, dim: number): { bucket: number; sign: number } {
  // low 8 bytes as LE integer; top bit picks the sign
  const value = digest.readBigUInt64LE(0);
  const sign = (value >> 63n) & 1n ? -1 : 1;
  return { bucket: Number(value % BigInt(dim)), sign };
}

/** Signed character-trigram hashing of the lowercased text. */
export class HashTextEncoder implements Encoder {
  readonly id: string;
  constructor(readonly dim: number) {
    if (!TEXT_DIMS.includes(dim as (typeof TEXT_DIMS)[number])) {
      throw new Error(`text dim must be one of ${TEXT_DIMS.join(", ")}, got ${dim}`);
    }
    this.id = `hash-trigram-v1-${dim}`;
  }

  async encodeText(text: string): Promise<Float32Array> {
    const counts = new Float32Array(this.dim);
    const lowered = text.toLowerCase();
    for (let i = 0; i + 3 <= lowered.length; i++) {
      const digest = createHash("sha256").update(lowered.slice(i, i + 3), "utf-8").digest();
      const { bucket, sign } = bucketOf(digest, this.dim);
      counts[bucket] += sign;
    }
    return l2Normalize(counts);
  }

  async encodeImage(): Promise<Float32Array> {
    throw new Error(`${this.id} encodes text only`);
  }
}

const IMAGE_SIGNATURES: Array<{ name: string; check: (b: Buffer) => boolean }> = [
  { name: "png", check: (b) => b.length > 24 && b.subarray(0, 8).equals(Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a])) },
  { name: "jpeg", check: (b) => b.length > 4 && b[0] === 0xff && b[1] === 0xd8 && b[b.length - 2] === 0xff && b[b.length - 1] === 0xd9 },
  { name: "gif", check: (b) => b.length > 13 && (b.subarray(0, 6).toString("latin1") === "GIF87a" || b.subarray(0, 6).toString("latin1") === "GIF89a") },
  { name: "webp", check: (b) => b.length > 16 && b.subarray(0, 4).toString("latin1") === "RIFF" && b.subarray(8, 12).toString("latin1") === "WEBP" },
];

export function sniffImageFormat(bytes: Buffer): string | null {
  for (const sig of IMAGE_SIGNATURES) if (sig.check(bytes)) return sig.name;
  return null;
}

/** Content hashing over validated image bytes, expanded to `dim` values. */
export class HashImageEncoder implements Encoder {
  readonly id: string;
  constructor(readonly dim: number) {
    this.id = `hash-bytes-v1-${dim}`;
  }

  async encodeText(): Promise<Float32Array> {
    throw new Error(`${this.id} encodes images only`);
  }

  async encodeImage(path: string): Promise<Float32Array> {
    const bytes = await fs.readFile(path);
    if (sniffImageFormat(bytes) === null) {
      throw new Error(`not a decodable image: ${path}`);
    }
    const seed = createHash("sha256").update(bytes).digest();
    const out = new Float32Array(this.dim);
    let block = Buffer.alloc(0);
    for (let i = 0; i < this.dim; i++) {
      const slot = i % 8;
      if (slot === 0) {
        block = createHash("sha256").update(seed).update(String(i / 8)).digest();
      }
      const raw = block.readUInt32LE(slot * 4);
      out[i] = raw / 0xffffffff - 0.5;
    }
    return l2Normalize(out);
  }
}

/**
 * Model-backed encoder through @huggingface/transformers, loaded lazily.
 * Text models: feature extraction (e.g. a 384-dim sentence encoder); joint
 * text-image models serve ranking tables. Unavailable offline.
 */
export async function loadModelEncoder(model: string, dim: number): Promise<Encoder> {
  let transformers: any;
  try {
    const moduleName = "@huggingface/transformers"; // optional peer; resolved at runtime only
    transformers = await import(moduleName);
  } catch {
    throw new Error(
      "@huggingface/transformers is not installed; use --encoder hash or install the optional dependency",
    );
  }
  const extractor = await transformers.pipeline("feature-extraction", model);
  return {
    id: `${model}`,
    dim,
    async encodeText(text: string): Promise<Float32Array> {
      const output = await extractor(text, { pooling: "mean", normalize: true });
      const vec = Float32Array.from(output.data as Iterable<number>);
      if (vec.length !== dim) {
        throw new Error(`${model} produced ${vec.length} dims, declared ${dim}`);
      }
      return l2Normalize(vec);
    },
    async encodeImage(): Promise<Float32Array> {
      throw new Error("image encoding requires an image pipeline; use --encoder hash offline");
    },
  };
}

export async function textEncoderFor(name: string, dim: number): Promise<Encoder> {
  if (name === "hash") return new HashTextEncoder(dim);
  return loadModelEncoder(name, dim);
}

export async function imageEncoderFor(name: string, dim: number): Promise<Encoder> {
  if (name === "hash") return new HashImageEncoder(dim);
  return loadModelEncoder(name, dim);
}

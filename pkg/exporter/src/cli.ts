#!/usr/bin/env node
/**
 * egtb-export: write text or image embedding tables in the EGTB format.
 *
 *   egtb-export export-text   --dim 384 --in keys.tsv --out table.egtb [--encoder hash]
 *   egtb-export export-images --in manifest.tsv --out table.egtb [--dim 768] [--encoder hash]
 *
 * Input TSV: one `key<TAB>payload` per line; payload is the text to embed or
 * the image path (relative paths resolve against the TSV's directory).
 * Duplicate keys fail before anything is written; writes are atomic
 * (temp file + rename). All vectors are L2-normalized.
 */

import { promises as fs } from "node:fs";
import { dirname, isAbsolute, join } from "node:path";
import process from "node:process";

import { EgtbEntry, writeEgtbFile } from "./egtb.js";
import { imageEncoderFor, sniffImageFormat, textEncoderFor, TEXT_DIMS } from "./encoders.js";

interface Options {
  input: string;
  output: string;
  dim: number;
  encoder: string;
}

function parseArgs(argv: string[], defaultDim: number): Options {
  const opts: Options = { input: "", output: "", dim: defaultDim, encoder: "hash" };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${arg}`);
      return argv[++i];
    };
    if (arg === "--in") opts.input = next();
    else if (arg === "--out") opts.output = next();
    else if (arg === "--dim") opts.dim = Number(next());
    else if (arg === "--encoder") opts.encoder = next();
    else throw new Error(`unknown option ${arg}`);
  }
  if (!opts.input || !opts.output) throw new Error("--in and --out are required");
  return opts;
}

async function readTsv(path: string): Promise<Array<{ key: string; payload: string }>> {
  const text = await fs.readFile(path, "utf-8");
  const rows: Array<{ key: string; payload: string }> = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === "") continue;
    const tab = line.indexOf("\t");
    if (tab < 0) throw new Error(`${path}:${i + 1}: expected key<TAB>payload`);
    const key = line.slice(0, tab);
    const payload = line.slice(tab + 1);
    if (seen.has(key)) throw new Error(`${path}:${i + 1}: duplicate key ${JSON.stringify(key)}`);
    seen.add(key);
    rows.push({ key, payload });
  }
  return rows;
}

async function exportText(argv: string[]): Promise<void> {
  const opts = parseArgs(argv, 384);
  if (!TEXT_DIMS.includes(opts.dim as 384 | 768)) {
    throw new Error(`--dim must be 384 or 768, got ${opts.dim}`);
  }
  const rows = await readTsv(opts.input);
  const encoder = await textEncoderFor(opts.encoder, opts.dim);
  const entries: EgtbEntry[] = [];
  for (const { key, payload } of rows) {
    entries.push({ key, vector: await encoder.encodeText(payload) });
  }
  await writeEgtbFile(opts.output, opts.dim, entries);
  console.log(
    `export-text: wrote ${entries.length} entries (dim ${opts.dim}, encoder ${encoder.id}) to ${opts.output}`,
  );
}

async function exportImages(argv: string[]): Promise<void> {
  const opts = parseArgs(argv, 768);
  const rows = await readTsv(opts.input);
  const base = dirname(opts.input);
  const resolved = rows.map(({ key, payload }) => ({
    key,
    path: isAbsolute(payload) ? payload : join(base, payload),
  }));

  // validate every image before encoding anything: a bad file aborts the job
  const bad: string[] = [];
  for (const { path } of resolved) {
    try {
      const bytes = await fs.readFile(path);
      if (sniffImageFormat(bytes) === null) bad.push(path);
    } catch {
      bad.push(path);
    }
  }
  if (bad.length > 0) {
    throw new Error(`undecodable image file(s): ${bad.join(", ")}`);
  }

  const encoder = await imageEncoderFor(opts.encoder, opts.dim);
  const entries: EgtbEntry[] = [];
  for (const { key, path } of resolved) {
    entries.push({ key, vector: await encoder.encodeImage(path) });
  }
  await writeEgtbFile(opts.output, opts.dim, entries);
  console.log(
    `export-images: wrote ${entries.length} entries (dim ${opts.dim}, encoder ${encoder.id}) to ${opts.output}`,
  );
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "export-text") await exportText(rest);
    else if (command === "export-images") await exportImages(rest);
    else {
      console.error("usage: egtb-export <export-text|export-images> --in FILE --out FILE [--dim N] [--encoder NAME]");
      return 2;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const isDirectRun = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}

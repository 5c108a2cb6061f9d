"""Input loaders: CoNLL-U documents, embedding tables, and dataset manifests.

Everything here is a pure reader. Loaded structures are immutable
(frozen dataclasses over tuples) and safe to share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path

import numpy as np

CONLLU_COLUMNS = 10
EGTB_MAGIC = b"EGTB"
EGTB_VERSION = 1
FALLBACK_DIMS = (384, 768)


class ConlluError(ValueError):
    """Malformed CoNLL-U input."""


class EmbeddingFormatError(ValueError):
    """Malformed embedding-table file."""


class ManifestError(ValueError):
    """Malformed or incomplete dataset manifest."""


@dataclass(frozen=True)
class Token:
    """One syntactic word of a sentence.

    ``index`` is the 1-based position within the sentence; ``head`` points at
    another token's index (0 for the root). ``ner`` keeps the BIO-tagged
    entity label (e.g. ``B-GPE``) or ``None``.
    """

    index: int
    form: str
    lemma: str
    upos: str
    head: int
    deprel: str
    ner: str | None = None


@dataclass(frozen=True)
class EntitySpan:
    """A contiguous entity mention: 0-based token range ``[start, end)``."""

    sentence: int
    start: int
    end: int
    label: str

    def surface(self, sentences: tuple[tuple[Token, ...], ...]) -> str:
        return " ".join(t.form for t in sentences[self.sentence][self.start : self.end])


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    sentences: tuple[tuple[Token, ...], ...]
    entity_spans: tuple[EntitySpan, ...]

    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def text(self) -> str:
        return " ".join(t.form for sent in self.sentences for t in sent)


def _parse_misc_ner(misc: str) -> str | None:
    if misc == "_":
        return None
    for item in misc.split("|"):
        if item.startswith("NER="):
            value = item[len("NER=") :]
            return None if value in ("", "O") else value
    return None


def _spans_from_bio(sent_idx: int, tokens: list[Token], line_nos: list[int]) -> list[EntitySpan]:
    spans: list[EntitySpan] = []
    open_label: str | None = None
    open_start = 0

    def close(end: int) -> None:
        nonlocal open_label
        if open_label is not None:
            spans.append(EntitySpan(sent_idx, open_start, end, open_label))
            open_label = None

    for pos, tok in enumerate(tokens):
        tag = tok.ner
        if tag is None:
            close(pos)
        elif tag.startswith("B-"):
            close(pos)
            open_label = tag[2:]
            open_start = pos
        elif tag.startswith("I-"):
            if open_label is None or open_label != tag[2:]:
                raise ConlluError(
                    f"line {line_nos[pos]}: {tag} continues no open {tag[2:]} span"
                )
        else:
            raise ConlluError(f"line {line_nos[pos]}: NER tag {tag!r} is not BIO-formed")
    close(len(tokens))
    return spans


def parse_conllu(text: str, doc_id: str = "") -> ParsedDocument:
    """Parse CoNLL-U content into a :class:`ParsedDocument`.

    Blank lines separate sentences; comment lines are ignored. Multiword-token
    and empty-node lines (ids containing ``-`` or ``.``) are skipped, so the
    result holds syntactic words only. NER labels are read from the MISC
    column (``NER=B-GPE``).
    """
    sentences: list[tuple[Token, ...]] = []
    spans: list[EntitySpan] = []
    pending: list[Token] = []
    pending_lines: list[int] = []

    def flush() -> None:
        if not pending:
            return
        n = len(pending)
        indices = [t.index for t in pending]
        if indices != list(range(1, n + 1)):
            raise ConlluError(
                f"line {pending_lines[0]}: token ids must be 1..{n}, got {indices}"
            )
        for tok, line_no in zip(pending, pending_lines):
            if not 0 <= tok.head <= n:
                raise ConlluError(
                    f"line {line_no}: head {tok.head} out of range 0..{n}"
                )
            if tok.head == tok.index:
                raise ConlluError(f"line {line_no}: token {tok.index} heads itself")
        sent_idx = len(sentences)
        spans.extend(_spans_from_bio(sent_idx, pending, pending_lines))
        sentences.append(tuple(pending))
        pending.clear()
        pending_lines.clear()

    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.strip() == "":
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != CONLLU_COLUMNS:
            raise ConlluError(
                f"line {line_no}: expected {CONLLU_COLUMNS} tab-separated columns, got {len(cols)}"
            )
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword token or empty node
        try:
            index = int(tok_id)
            head = int(cols[6])
        except ValueError as exc:
            raise ConlluError(f"line {line_no}: non-integer id or head: {exc}") from None
        pending.append(
            Token(
                index=index,
                form=cols[1],
                lemma=cols[2],
                upos=cols[3],
                head=head,
                deprel=cols[7],
                ner=_parse_misc_ner(cols[9]),
            )
        )
        pending_lines.append(line_no)
    flush()
    return ParsedDocument(doc_id=doc_id, sentences=tuple(sentences), entity_spans=tuple(spans))


def serialize_conllu(doc: ParsedDocument) -> str:
    """Inverse of :func:`parse_conllu` over the fields this package keeps."""
    blocks = []
    for sent in doc.sentences:
        lines = []
        for t in sent:
            misc = f"NER={t.ner}" if t.ner else "_"
            lines.append(
                "\t".join(
                    [str(t.index), t.form, t.lemma, t.upos, "_", "_", str(t.head), t.deprel, "_", misc]
                )
            )
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


def load_conllu_file(path: str | Path) -> ParsedDocument:
    p = Path(path)
    return parse_conllu(p.read_text(encoding="utf-8"), doc_id=p.stem)


# ---------------------------------------------------------------------------
# Embedding tables (EGTB binary format)
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Key -> unit-length-or-not real vector map with a fixed dimensionality."""

    dim: int
    entries: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str) -> np.ndarray | None:
        return self.entries.get(key)


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Read an EGTB file.

    Layout: magic ``EGTB``, u32 version (=1), u32 dim, u64 entry count, then
    per entry a u32 key byte-length, the UTF-8 key, and dim little-endian f32s.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 20:
        raise EmbeddingFormatError(f"{path}: file too short for EGTB header")
    if blob[:4] != EGTB_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {blob[:4]!r}, expected {EGTB_MAGIC!r}")
    version, dim = struct.unpack_from("<II", blob, 4)
    (count,) = struct.unpack_from("<Q", blob, 12)
    if version != EGTB_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if dim <= 0:
        raise EmbeddingFormatError(f"{path}: non-positive dim {dim}")
    off = 20
    entries: dict[str, np.ndarray] = {}
    vec_bytes = 4 * dim
    for i in range(count):
        if off + 4 > len(blob):
            raise EmbeddingFormatError(f"{path}: truncated at entry {i} (key length)")
        (key_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        if off + key_len + vec_bytes > len(blob):
            raise EmbeddingFormatError(f"{path}: truncated at entry {i} (payload)")
        key = blob[off : off + key_len].decode("utf-8")
        off += key_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float32)
        off += vec_bytes
        if key in entries:
            raise EmbeddingFormatError(f"{path}: duplicate key {key!r}")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"{path}: non-finite values under key {key!r}")
        entries[key] = vec
    if off != len(blob):
        raise EmbeddingFormatError(f"{path}: {len(blob) - off} trailing bytes after last entry")
    return EmbeddingTable(dim=dim, entries=entries)


def save_embedding_table(path: str | Path, table: EmbeddingTable) -> None:
    out = bytearray()
    out += EGTB_MAGIC
    out += struct.pack("<IIQ", EGTB_VERSION, table.dim, len(table.entries))
    for key, vec in table.entries.items():
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (table.dim,):
            raise EmbeddingFormatError(
                f"entry {key!r} has shape {arr.shape}, table dim is {table.dim}"
            )
        kb = key.encode("utf-8")
        out += struct.pack("<I", len(kb))
        out += kb
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def fallback_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic text embedding with no model behind it.

    Hashes character trigrams of the lowercased text into ``dim`` buckets with
    signed counts, then L2-normalizes. Texts too short to yield a trigram come
    back as the first basis vector. Same input gives the same vector on every
    platform (the hash is keyless blake2b, not Python's salted ``hash``).
    """
    if dim not in FALLBACK_DIMS:
        raise ValueError(f"dim must be one of {FALLBACK_DIMS}, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    lowered = text.lower()
    for i in range(len(lowered) - 2):
        gram = lowered[i : i + 3]
        h = int.from_bytes(blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little")
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


# ---------------------------------------------------------------------------
# Dataset manifests (JSON Lines)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    claim_doc: str
    evidence_docs: tuple[str, ...]
    label: int
    image_key: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    base_dir: Path

    def resolve(self, ref: str) -> Path:
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p


def load_manifest(path: str | Path, require_files: bool = True) -> DatasetManifest:
    """Load a JSON Lines manifest; relative document paths resolve against the
    manifest's directory. With ``require_files`` every referenced document is
    checked up front and *all* missing paths are reported in one error.
    """
    p = Path(path)
    records: list[ManifestRecord] = []
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{p}:{line_no}: invalid JSON: {exc}") from None
        try:
            label = obj["label"]
            rec = ManifestRecord(
                sample_id=str(obj["id"]),
                claim_doc=str(obj["claim_doc"]),
                evidence_docs=tuple(str(e) for e in obj["evidence_docs"]),
                label=int(label),
                image_key=obj.get("image_key"),
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{p}:{line_no}: missing or malformed field: {exc}") from None
        if label not in (0, 1):
            raise ManifestError(f"{p}:{line_no}: label must be 0 or 1, got {label!r}")
        records.append(rec)
    manifest = DatasetManifest(records=tuple(records), base_dir=p.parent)
    if require_files:
        missing = []
        for rec in manifest.records:
            for ref in (rec.claim_doc, *rec.evidence_docs):
                if not manifest.resolve(ref).is_file():
                    missing.append(ref)
        if missing:
            raise ManifestError(
                f"{p}: {len(missing)} referenced document(s) missing: " + ", ".join(missing)
            )
    return manifest

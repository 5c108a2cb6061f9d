"""Rank candidate evidence documents against a claim-image embedding.

Candidates are scored by cosine similarity between their text embedding and
the image embedding; the top-k texts, in rank order, become the final
evidence document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import EntitySpan, ParsedDocument

DEFAULT_TOP_K = 7


@dataclass
class EvidenceCandidate:
    doc_id: str
    embedding: np.ndarray
    similarity: float | None = None


@dataclass(frozen=True)
class RankedEvidence:
    doc_ids: tuple[str, ...]
    similarities: tuple[float, ...]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must share one shape, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def rank_evidence(
    image_emb: np.ndarray,
    candidates: list[EvidenceCandidate],
    k: int = DEFAULT_TOP_K,
) -> RankedEvidence:
    """Order candidates by similarity to the image, keep the best ``k``.

    Ties break by ascending doc_id so reruns produce identical rankings.
    Each candidate's ``similarity`` field is filled as a side effect.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not candidates:
        raise ValueError("no candidates to rank")
    image_emb = np.asarray(image_emb, dtype=np.float64)
    for c in candidates:
        if np.asarray(c.embedding).shape != image_emb.shape:
            raise ValueError(
                f"candidate {c.doc_id!r} embedding dim {np.asarray(c.embedding).shape} "
                f"!= image dim {image_emb.shape}"
            )
        c.similarity = cosine_similarity(image_emb, c.embedding)
    ordered = sorted(candidates, key=lambda c: (-c.similarity, c.doc_id))
    top = ordered[: min(k, len(ordered))]
    return RankedEvidence(
        doc_ids=tuple(c.doc_id for c in top),
        similarities=tuple(float(c.similarity) for c in top),
    )


def concatenate_evidence(docs: list[ParsedDocument]) -> ParsedDocument:
    """Join parsed evidence documents in rank order into one document.

    Sentence lists are appended; entity spans are re-offset to their new
    sentence indices; the result's doc_id records the constituent ids.
    """
    sentences: list[tuple] = []
    spans: list[EntitySpan] = []
    for doc in docs:
        offset = len(sentences)
        sentences.extend(doc.sentences)
        for sp in doc.entity_spans:
            spans.append(EntitySpan(sp.sentence + offset, sp.start, sp.end, sp.label))
    return ParsedDocument(
        doc_id="+".join(d.doc_id for d in docs),
        sentences=tuple(sentences),
        entity_spans=tuple(spans),
    )

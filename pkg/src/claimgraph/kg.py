"""Rule-based knowledge-graph construction from dependency-annotated text.

Nodes come from NER entity spans (typed through a fixed label map) and from
verb tokens (one EVENT node per verb). Edges come from a small set of
dependency patterns over subjects, objects, locative prepositions, and
compounds. Every emitted edge carries the id of the rule that produced it.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

from .ingest import ParsedDocument, Token


class NodeType(str, Enum):
    ENTITY = "ENTITY"
    EVENT = "EVENT"
    STATE = "STATE"  # reserved; no current rule emits it
    LOCATION = "LOCATION"
    TIME = "TIME"
    ATTRIBUTE = "ATTRIBUTE"


class EdgeType(str, Enum):
    PERFORMS = "PERFORMS"
    EXPERIENCES = "EXPERIENCES"
    TARGETS = "TARGETS"
    LOCATED_IN = "LOCATED_IN"
    HAS_STATE = "HAS_STATE"
    SAME_AS = "SAME_AS"  # co-reference; absorbed by id-level dedup under current rules


# NER label -> node type. Labels not listed default to ENTITY.
NER_NODE_TYPES: dict[str, NodeType] = {
    "GPE": NodeType.LOCATION,
    "LOC": NodeType.LOCATION,
    "FAC": NodeType.LOCATION,
    "DATE": NodeType.TIME,
    "TIME": NodeType.TIME,
    "EVENT": NodeType.EVENT,
    "PERCENT": NodeType.ATTRIBUTE,
    "MONEY": NodeType.ATTRIBUTE,
    "QUANTITY": NodeType.ATTRIBUTE,
    "ORDINAL": NodeType.ATTRIBUTE,
    "CARDINAL": NodeType.ATTRIBUTE,
}

LOCATIVE_PREPS = ("in", "at", "on")

# Rule identifiers recorded on edges for auditability.
RULE_NSUBJ = "nsubj-performs"
RULE_NSUBJPASS = "nsubjpass-experiences"
RULE_DOBJ = "dobj-targets"
RULE_POBJ = "pobj-targets"
RULE_VERB_PREP = "verb-prep-located-in"
RULE_NOUN_PREP = "noun-prep-located-in"
RULE_COMPOUND = "compound-has-state"


@dataclass(frozen=True)
class Node:
    node_id: str
    label: str
    type: NodeType


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    type: EdgeType
    rule: str


@dataclass(frozen=True)
class KnowledgeGraph:
    """Directed multigraph; parallel edges of different types are allowed."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def node_index(self) -> dict[str, int]:
        return {n.node_id: i for i, n in enumerate(self.nodes)}

    def is_empty(self) -> bool:
        return not self.nodes

    def validate(self) -> None:
        ids = self.node_ids()
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise ValueError(f"edge {e} references a missing node")
            if e.type is EdgeType.SAME_AS and e.src == e.dst:
                raise ValueError(f"SAME_AS self-loop on {e.src!r}")


def canonical_id(label: str) -> str:
    """Normalize an entity label into a node id.

    Collapses internal whitespace, lowercases, and strips one leading
    ``the `` so "Paris" and "the Paris" share a node.
    """
    collapsed = " ".join(label.split())
    if not collapsed:
        raise ValueError("cannot canonicalize an empty label")
    lowered = collapsed.lower()
    if lowered.startswith("the ") and len(lowered) > 4:
        lowered = lowered[4:]
    return lowered


class _Builder:
    def __init__(self, doc: ParsedDocument):
        self.doc = doc
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self._edge_seen: set[tuple[str, str, EdgeType]] = set()
        # (sentence, token position) -> node id, for span-member tokens
        self.token_node: dict[tuple[int, int], str] = {}
        self._event_suffix = self._plan_event_suffixes()
        # (sentence, lemma) -> event node id
        self.event_ids: dict[tuple[int, str], str] = {}

    def _plan_event_suffixes(self) -> set[str]:
        """Verb lemmas appearing in more than one sentence get per-sentence ids.

        Within one sentence repeated lemmas share an event node; across
        sentences they stay distinct so separate mentions stay separate events.
        """
        lemma_sents: dict[str, set[int]] = defaultdict(set)
        for s_idx, sent in enumerate(self.doc.sentences):
            for tok in sent:
                if tok.upos == "VERB":
                    lemma_sents[tok.lemma].add(s_idx)
        return {lemma for lemma, sents in lemma_sents.items() if len(sents) > 1}

    def add_entity_nodes(self) -> None:
        for span in self.doc.entity_spans:
            label = span.surface(self.doc.sentences)
            node_id = canonical_id(label)
            if node_id not in self.nodes:
                ner_base = span.label.split("-")[-1] if span.label else ""
                ntype = NER_NODE_TYPES.get(ner_base, NodeType.ENTITY)
                self.nodes[node_id] = Node(node_id, label, ntype)
            for pos in range(span.start, span.end):
                self.token_node[(span.sentence, pos)] = node_id

    def ensure_event(self, s_idx: int, tok: Token) -> str:
        key = (s_idx, tok.lemma)
        node_id = self.event_ids.get(key)
        if node_id is None:
            node_id = f"{tok.lemma}#{s_idx}" if tok.lemma in self._event_suffix else tok.lemma
            self.event_ids[key] = node_id
            # An entity may already own this id; keep the existing node then.
            if node_id not in self.nodes:
                self.nodes[node_id] = Node(node_id, tok.lemma, NodeType.EVENT)
        return node_id

    def node_for_token(self, s_idx: int, tok: Token) -> str | None:
        hit = self.token_node.get((s_idx, tok.index - 1))
        if hit is not None:
            return hit
        if tok.upos == "VERB":
            return self.event_ids.get((s_idx, tok.lemma))
        return None

    def add_edge(self, src: str, dst: str, etype: EdgeType, rule: str) -> None:
        key = (src, dst, etype)
        if key in self._edge_seen:
            return  # identical parallel edges collapse; the first rule id wins
        self._edge_seen.add(key)
        self.edges.append(Edge(src, dst, etype, rule))

    def extract_edges(self) -> None:
        # All event nodes first, so verb arguments can resolve across rules.
        for s_idx, sent in enumerate(self.doc.sentences):
            for tok in sent:
                if tok.upos == "VERB":
                    self.ensure_event(s_idx, tok)

        for s_idx, sent in enumerate(self.doc.sentences):
            by_index = {t.index: t for t in sent}
            children: dict[int, list[Token]] = defaultdict(list)
            for t in sent:
                children[t.head].append(t)

            for tok in sent:
                if tok.upos != "VERB":
                    continue
                verb_id = self.event_ids[(s_idx, tok.lemma)]
                for child in children[tok.index]:
                    cnode = self.node_for_token(s_idx, child)
                    if child.deprel == "nsubj" and cnode:
                        self.add_edge(cnode, verb_id, EdgeType.PERFORMS, RULE_NSUBJ)
                    elif child.deprel == "nsubjpass" and cnode:
                        self.add_edge(verb_id, cnode, EdgeType.EXPERIENCES, RULE_NSUBJPASS)
                    elif child.deprel == "dobj" and cnode:
                        self.add_edge(verb_id, cnode, EdgeType.TARGETS, RULE_DOBJ)
                    elif child.deprel == "prep":
                        locative = child.form.lower() in LOCATIVE_PREPS
                        for grand in children[child.index]:
                            if grand.deprel != "pobj":
                                continue
                            gnode = self.node_for_token(s_idx, grand)
                            if not gnode:
                                continue
                            if locative:
                                self.add_edge(verb_id, gnode, EdgeType.LOCATED_IN, RULE_VERB_PREP)
                            else:
                                # a prep the locative rule did not consume
                                self.add_edge(verb_id, gnode, EdgeType.TARGETS, RULE_POBJ)

            for tok in sent:
                if tok.deprel == "prep" and tok.form.lower() == "in":
                    head = by_index.get(tok.head)
                    if head is None or head.upos == "VERB":
                        continue
                    hnode = self.node_for_token(s_idx, head)
                    if not hnode:
                        continue
                    for child in children[tok.index]:
                        if child.deprel != "pobj":
                            continue
                        cnode = self.node_for_token(s_idx, child)
                        if cnode:
                            self.add_edge(hnode, cnode, EdgeType.LOCATED_IN, RULE_NOUN_PREP)

            for tok in sent:
                if tok.deprel != "compound":
                    continue
                head = by_index.get(tok.head)
                if head is None:
                    continue
                cnode = self.node_for_token(s_idx, tok)
                hnode = self.node_for_token(s_idx, head)
                if cnode and hnode and cnode != hnode:
                    self.add_edge(cnode, hnode, EdgeType.HAS_STATE, RULE_COMPOUND)


def extract_nodes(doc: ParsedDocument) -> tuple[Node, ...]:
    """Entity-span nodes only; event nodes appear through edge extraction."""
    b = _Builder(doc)
    b.add_entity_nodes()
    return tuple(b.nodes.values())


def build_graph(doc: ParsedDocument) -> KnowledgeGraph:
    b = _Builder(doc)
    b.add_entity_nodes()
    b.extract_edges()
    graph = KnowledgeGraph(nodes=tuple(b.nodes.values()), edges=tuple(b.edges))
    graph.validate()
    return graph


def graph_to_json(graph: KnowledgeGraph) -> str:
    """Stable-key-order JSON; byte-identical across reruns on the same input."""
    obj = {
        "nodes": [
            {"id": n.node_id, "label": n.label, "type": n.type.value} for n in graph.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "type": e.type.value, "rule": e.rule}
            for e in graph.edges
        ],
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def graph_from_json(text: str) -> KnowledgeGraph:
    obj = json.loads(text)
    nodes = tuple(
        Node(n["id"], n["label"], NodeType(n["type"])) for n in obj.get("nodes", [])
    )
    edges = tuple(
        Edge(e["src"], e["dst"], EdgeType(e["type"]), e.get("rule", ""))
        for e in obj.get("edges", [])
    )
    graph = KnowledgeGraph(nodes=nodes, edges=edges)
    graph.validate()
    return graph

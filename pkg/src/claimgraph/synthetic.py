"""Synthetic separable dataset for smoke-training and harness tests.

A sample is positive exactly when the claim graph's node-label set is a
subset of the evidence graph's node-label set: positive claims draw every
label from the evidence, negative claims draw every label from outside it.
Separability therefore holds by construction and the generator is fully
seeded. Graphs are short typed chains, which keeps the structural features
varied but benign.
"""

from __future__ import annotations

import numpy as np

from .features import FeaturedGraph, featurize
from .kg import Edge, EdgeType, KnowledgeGraph, Node, NodeType
from .training import Sample

VOCAB = (
    "amber", "basil", "cobalt", "dahlia", "ember", "fjord",
    "garnet", "heron", "indigo", "juniper", "krypton", "lotus",
)

_NODE_TYPES = (NodeType.ENTITY, NodeType.EVENT, NodeType.LOCATION, NodeType.TIME)
_EDGE_TYPES = (EdgeType.PERFORMS, EdgeType.TARGETS, EdgeType.LOCATED_IN, EdgeType.HAS_STATE)


def _chain_graph(labels: list[str]) -> KnowledgeGraph:
    nodes = tuple(
        Node(label, label, _NODE_TYPES[i % len(_NODE_TYPES)]) for i, label in enumerate(labels)
    )
    edges = tuple(
        Edge(labels[i - 1], labels[i], _EDGE_TYPES[i % len(_EDGE_TYPES)], "synthetic")
        for i in range(1, len(labels))
    )
    return KnowledgeGraph(nodes=nodes, edges=edges)


def synthetic_dataset(n: int = 200, seed: int = 7) -> list[Sample]:
    """Balanced dataset of ``n`` samples; even indices positive, odd negative."""
    rng = np.random.default_rng(seed)
    vocab = np.array(VOCAB)
    samples: list[Sample] = []
    for i in range(n):
        ev_size = int(rng.integers(4, 7))
        ev_labels = [str(w) for w in rng.choice(vocab, size=ev_size, replace=False)]
        cl_size = int(rng.integers(2, 4))
        positive = i % 2 == 0
        if positive:
            cl_labels = [str(w) for w in rng.choice(ev_labels, size=min(cl_size, ev_size), replace=False)]
        else:
            outside = [w for w in vocab if w not in ev_labels]
            cl_labels = [str(w) for w in rng.choice(outside, size=min(cl_size, len(outside)), replace=False)]
        samples.append(
            Sample(
                sample_id=f"syn-{i:04d}",
                evidence=_chain_graph(ev_labels),
                claim=_chain_graph(cl_labels),
                label=1 if positive else 0,
            )
        )
    return samples


def gradcheck_pair(text_dim: int = 768) -> tuple[FeaturedGraph, FeaturedGraph]:
    """Fixed 5-node evidence / 4-node claim pair for gradient checking."""
    ev_labels = ["amber", "basil", "cobalt", "dahlia", "ember"]
    cl_labels = ["amber", "cobalt", "fjord", "garnet"]
    ev_edges = [(0, 1, 0), (1, 2, 1), (2, 3, 2), (3, 4, 3), (0, 4, 1)]
    cl_edges = [(0, 1, 0), (1, 2, 1), (2, 3, 2)]

    def build(labels: list[str], edge_list: list[tuple[int, int, int]]) -> KnowledgeGraph:
        nodes = tuple(Node(w, w, _NODE_TYPES[i % len(_NODE_TYPES)]) for i, w in enumerate(labels))
        edges = tuple(
            Edge(labels[i], labels[j], _EDGE_TYPES[k % len(_EDGE_TYPES)], "synthetic")
            for i, j, k in edge_list
        )
        return KnowledgeGraph(nodes=nodes, edges=edges)

    return (
        featurize(build(ev_labels, ev_edges), text_dim),
        featurize(build(cl_labels, cl_edges), text_dim),
    )

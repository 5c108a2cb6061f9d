"""Structural node features (5-dim) and edge features (7-dim) over a graph.

Node side: in/out/total degree plus pagerank and reverse pagerank.
Edge side: directed edge-betweenness, shared-neighbor counts, jaccards,
and detour path lengths. Edge features are computed only on request; the
classifier's default configuration does not consume them.
"""

from __future__ import annotations

import struct as _struct
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import EmbeddingTable, fallback_embed, load_embedding_table, save_embedding_table
from .kg import KnowledgeGraph, graph_from_json, graph_to_json

STRUCT_DIM = 5
EDGE_FEATURE_DIM = 7
UNREACHABLE_PATH_SENTINEL = 10.0


@dataclass(frozen=True)
class NodeStructFeatures:
    in_degree: int
    out_degree: int
    total_degree: int
    pagerank: float
    reverse_pagerank: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.in_degree, self.out_degree, self.total_degree, self.pagerank, self.reverse_pagerank],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class EdgeFeatures:
    centrality: float
    common_predecessors: int
    common_successors: int
    in_jaccard: float
    out_jaccard: float
    forward_path_len: float
    backward_path_len: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.centrality,
                self.common_predecessors,
                self.common_successors,
                self.in_jaccard,
                self.out_jaccard,
                self.forward_path_len,
                self.backward_path_len,
            ],
            dtype=np.float64,
        )


def _edge_index_pairs(graph: KnowledgeGraph) -> list[tuple[int, int]]:
    idx = graph.node_index()
    return [(idx[e.src], idx[e.dst]) for e in graph.edges]


def pagerank(
    graph: KnowledgeGraph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iters: int = 200,
) -> np.ndarray:
    """Power-iteration pagerank, aligned with ``graph.nodes`` order.

    Uniform teleport; dangling nodes redistribute their mass uniformly.
    Parallel edges contribute proportionally to the transition weights.
    """
    n = len(graph.nodes)
    if n == 0:
        raise ValueError("pagerank of an empty graph")
    pairs = _edge_index_pairs(graph)
    out_weight: list[dict[int, int]] = [defaultdict(int) for _ in range(n)]
    out_deg = np.zeros(n, dtype=np.float64)
    for u, v in pairs:
        out_weight[u][v] += 1
        out_deg[u] += 1.0
    rank = np.full(n, 1.0 / n, dtype=np.float64)
    for _ in range(max_iters):
        nxt = np.zeros(n, dtype=np.float64)
        dangling_mass = 0.0
        for u in range(n):
            if out_deg[u] == 0.0:
                dangling_mass += rank[u]
                continue
            share = rank[u] / out_deg[u]
            for v, mult in out_weight[u].items():
                nxt[v] += share * mult
        nxt = (1.0 - damping) / n + damping * (nxt + dangling_mass / n)
        if float(np.abs(nxt - rank).sum()) < tol:
            rank = nxt
            break
        rank = nxt
    return rank


def reverse_graph(graph: KnowledgeGraph) -> KnowledgeGraph:
    from .kg import Edge

    return KnowledgeGraph(
        nodes=graph.nodes,
        edges=tuple(Edge(e.dst, e.src, e.type, e.rule) for e in graph.edges),
    )


def reverse_pagerank(
    graph: KnowledgeGraph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iters: int = 200,
) -> np.ndarray:
    return pagerank(reverse_graph(graph), damping=damping, tol=tol, max_iters=max_iters)


def node_struct_features(graph: KnowledgeGraph) -> tuple[NodeStructFeatures, ...]:
    """Per-node (in, out, total, pagerank, reverse pagerank), in node order.

    Degrees count the multigraph: parallel edges of different types each
    contribute; a self-loop adds one to both in- and out-degree.
    """
    n = len(graph.nodes)
    if n == 0:
        raise ValueError("features of an empty graph")
    ind = np.zeros(n, dtype=np.int64)
    outd = np.zeros(n, dtype=np.int64)
    for u, v in _edge_index_pairs(graph):
        outd[u] += 1
        ind[v] += 1
    pr = pagerank(graph)
    rpr = reverse_pagerank(graph)
    return tuple(
        NodeStructFeatures(int(ind[i]), int(outd[i]), int(ind[i] + outd[i]), float(pr[i]), float(rpr[i]))
        for i in range(n)
    )


def struct_feature_matrix(graph: KnowledgeGraph) -> np.ndarray:
    return np.stack([f.as_vector() for f in node_struct_features(graph)])


def _simple_adjacency(pairs: list[tuple[int, int]], n: int) -> list[list[int]]:
    succ: list[set[int]] = [set() for _ in range(n)]
    for u, v in pairs:
        succ[u].add(v)
    return [sorted(s) for s in succ]


def _bfs_distance(adj: list[list[int]], src: int, dst: int) -> int | None:
    if src == dst:
        return 0
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                if v == dst:
                    return dist[v]
                q.append(v)
    return None


def edge_betweenness(graph: KnowledgeGraph) -> dict[tuple[int, int], float]:
    """Directed, unweighted edge-betweenness by Brandes accumulation.

    Computed on the simple projection (unique ordered node pairs); parallel
    typed edges over the same pair share the pair's score.
    """
    n = len(graph.nodes)
    adj = _simple_adjacency(_edge_index_pairs(graph), n)
    scores: dict[tuple[int, int], float] = defaultdict(float)
    for s in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n, dtype=np.float64)
        sigma[s] = 1.0
        dist = np.full(n, -1, dtype=np.int64)
        dist[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            stack.append(u)
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
                if dist[v] == dist[u] + 1:
                    sigma[v] += sigma[u]
                    preds[v].append(u)
        delta = np.zeros(n, dtype=np.float64)
        while stack:
            w = stack.pop()
            for u in preds[w]:
                contrib = sigma[u] / sigma[w] * (1.0 + delta[w])
                scores[(u, w)] += contrib
                delta[u] += contrib
    return dict(scores)


def edge_features(graph: KnowledgeGraph, edge_pos: int) -> EdgeFeatures:
    """Features for the edge at position ``edge_pos`` in ``graph.edges``."""
    feats = all_edge_features(graph)
    if not 0 <= edge_pos < len(feats):
        raise ValueError(f"edge position {edge_pos} not in graph")
    return feats[edge_pos]


def all_edge_features(graph: KnowledgeGraph) -> tuple[EdgeFeatures, ...]:
    n = len(graph.nodes)
    pairs = _edge_index_pairs(graph)
    preds: list[set[int]] = [set() for _ in range(n)]
    succs: list[set[int]] = [set() for _ in range(n)]
    for u, v in pairs:
        succs[u].add(v)
        preds[v].add(u)
    betweenness = edge_betweenness(graph)

    out: list[EdgeFeatures] = []
    for pos, (u, v) in enumerate(pairs):
        remaining = pairs[:pos] + pairs[pos + 1 :]
        adj = _simple_adjacency(remaining, n)
        fwd = _bfs_distance(adj, u, v)
        bwd = _bfs_distance(adj, v, u)
        cp = preds[u] & preds[v]
        cs = succs[u] & succs[v]
        pu_union = preds[u] | preds[v]
        su_union = succs[u] | succs[v]
        out.append(
            EdgeFeatures(
                centrality=float(betweenness.get((u, v), 0.0)),
                common_predecessors=len(cp),
                common_successors=len(cs),
                in_jaccard=len(cp) / len(pu_union) if pu_union else 0.0,
                out_jaccard=len(cs) / len(su_union) if su_union else 0.0,
                forward_path_len=float(fwd) if fwd is not None else UNREACHABLE_PATH_SENTINEL,
                backward_path_len=float(bwd) if bwd is not None else UNREACHABLE_PATH_SENTINEL,
            )
        )
    return tuple(out)


# ---------------------------------------------------------------------------
# Featured graphs
# ---------------------------------------------------------------------------


@dataclass
class FeaturedGraph:
    graph: KnowledgeGraph
    label_embeddings: np.ndarray  # n x dim, float64
    struct: np.ndarray  # n x 5, float64
    edge_feats: np.ndarray | None = None  # E x 7 when enabled

    @property
    def n_nodes(self) -> int:
        return len(self.graph.nodes)


def featurize(
    graph: KnowledgeGraph,
    dim: int,
    table: EmbeddingTable | None = None,
    with_edge_features: bool = False,
) -> FeaturedGraph:
    """Attach label embeddings and structural vectors to a graph.

    Labels found in ``table`` use the stored vector; everything else (and
    everything, when no table is given) goes through the deterministic
    fallback embedder. Event nodes embed their display label, i.e. the lemma.
    """
    if graph.is_empty():
        raise ValueError("cannot featurize an empty graph")
    if table is not None and table.dim != dim:
        raise ValueError(f"table dim {table.dim} != requested dim {dim}")
    rows = []
    for node in graph.nodes:
        vec = table.get(node.label) if table is not None else None
        rows.append(np.asarray(vec, dtype=np.float64) if vec is not None else fallback_embed(node.label, dim))
    ef = None
    if with_edge_features:
        feats = all_edge_features(graph)
        ef = (
            np.stack([f.as_vector() for f in feats])
            if feats
            else np.zeros((0, EDGE_FEATURE_DIM), dtype=np.float64)
        )
    return FeaturedGraph(
        graph=graph,
        label_embeddings=np.stack(rows),
        struct=struct_feature_matrix(graph),
        edge_feats=ef,
    )


def save_featured(fg: FeaturedGraph, stem: str | Path) -> None:
    """Write a featured graph as ``<stem>.graph.json`` + binary siblings.

    Suffixes are appended to the stem verbatim (a stem like ``s0.claim``
    keeps its dotted name).
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{stem}.graph.json").write_text(graph_to_json(fg.graph), encoding="utf-8")
    table = EmbeddingTable(
        dim=fg.label_embeddings.shape[1],
        entries={
            n.node_id: fg.label_embeddings[i].astype(np.float32)
            for i, n in enumerate(fg.graph.nodes)
        },
    )
    save_embedding_table(Path(f"{stem}.labels.egtb"), table)
    _write_f32_matrix(Path(f"{stem}.struct.f32"), fg.struct)
    if fg.edge_feats is not None:
        _write_f32_matrix(Path(f"{stem}.edgefeat.f32"), fg.edge_feats)


def load_featured(stem: str | Path) -> FeaturedGraph:
    stem = Path(stem)
    graph = graph_from_json(Path(f"{stem}.graph.json").read_text(encoding="utf-8"))
    table = load_embedding_table(Path(f"{stem}.labels.egtb"))
    emb = np.stack([table.entries[n.node_id] for n in graph.nodes]).astype(np.float64)
    struct_m = _read_f32_matrix(Path(f"{stem}.struct.f32"), STRUCT_DIM)
    edge_path = Path(f"{stem}.edgefeat.f32")
    ef = _read_f32_matrix(edge_path, EDGE_FEATURE_DIM) if edge_path.exists() else None
    return FeaturedGraph(graph=graph, label_embeddings=emb, struct=struct_m, edge_feats=ef)


def _write_f32_matrix(path: Path, mat: np.ndarray) -> None:
    rows, cols = mat.shape
    with open(path, "wb") as fh:
        fh.write(_struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def _read_f32_matrix(path: Path, expect_cols: int) -> np.ndarray:
    blob = path.read_bytes()
    rows, cols = _struct.unpack_from("<II", blob, 0)
    if cols != expect_cols:
        raise ValueError(f"{path}: expected {expect_cols} columns, found {cols}")
    mat = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=8)
    return mat.reshape(rows, cols).astype(np.float64)

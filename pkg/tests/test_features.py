"""Feature computations checked against independent brute-force oracles.

The pagerank oracle is a dense-matrix power iteration written from the
transition definition; the betweenness oracle enumerates all shortest paths
pair by pair. Neither shares code with the implementation under test.
"""

import itertools
from collections import deque

import numpy as np
import pytest

from claimgraph.features import (
    EDGE_FEATURE_DIM,
    UNREACHABLE_PATH_SENTINEL,
    all_edge_features,
    edge_betweenness,
    edge_features,
    featurize,
    load_featured,
    node_struct_features,
    pagerank,
    reverse_graph,
    reverse_pagerank,
    save_featured,
    struct_feature_matrix,
)
from claimgraph.kg import Edge, EdgeType, KnowledgeGraph, Node, NodeType


def graph_of(n, pairs, types=None):
    nodes = tuple(Node(f"n{i}", f"n{i}", NodeType.ENTITY) for i in range(n))
    edges = tuple(
        Edge(f"n{u}", f"n{v}", (types or {}).get((u, v), EdgeType.PERFORMS), "t")
        for u, v in pairs
    )
    return KnowledgeGraph(nodes=nodes, edges=edges)


def oracle_pagerank(n, pairs, damping=0.85, iters=500):
    """Dense transition-matrix power iteration, straight from the definition."""
    counts = np.zeros((n, n))
    for u, v in pairs:
        counts[u, v] += 1.0
    out = counts.sum(axis=1)
    r = np.full(n, 1.0 / n)
    for _ in range(iters):
        flow = np.zeros(n)
        for u in range(n):
            if out[u] == 0:
                flow += r[u] / n
            else:
                flow += r[u] * counts[u] / out[u]
        r = (1 - damping) / n + damping * flow
    return r


def random_digraph(rng, max_nodes=30):
    n = int(rng.integers(2, max_nodes + 1))
    pairs = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < 0.15:
                pairs.append((u, v))
    return n, pairs


class TestPagerank:
    def test_three_cycle_uniform(self):
        g = graph_of(3, [(0, 1), (1, 2), (2, 0)])
        np.testing.assert_allclose(pagerank(g), [1 / 3] * 3, atol=1e-12)

    def test_two_isolated_nodes(self):
        g = graph_of(2, [])
        np.testing.assert_allclose(pagerank(g), [0.5, 0.5], atol=1e-12)

    def test_chain_matches_oracle(self):
        g = graph_of(2, [(0, 1)])
        np.testing.assert_allclose(pagerank(g), oracle_pagerank(2, [(0, 1)]), atol=1e-8)

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError):
            pagerank(KnowledgeGraph(nodes=(), edges=()))

    def test_random_graphs_against_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n, pairs = random_digraph(rng)
            g = graph_of(n, pairs)
            pr = pagerank(g)
            assert abs(pr.sum() - 1.0) < 1e-9
            assert (pr > 0).all()
            np.testing.assert_allclose(pr, oracle_pagerank(n, pairs), atol=1e-8)

    def test_reverse_equals_pagerank_of_reversed_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n, pairs = random_digraph(rng, max_nodes=15)
            g = graph_of(n, pairs)
            assert reverse_pagerank(g).tobytes() == pagerank(reverse_graph(g)).tobytes()

    def test_reverse_of_cycle_uniform(self):
        g = graph_of(3, [(0, 1), (1, 2), (2, 0)])
        np.testing.assert_allclose(reverse_pagerank(g), [1 / 3] * 3, atol=1e-12)

    def test_reverse_chain_identity(self):
        g = graph_of(2, [(0, 1)])
        fwd = pagerank(graph_of(2, [(1, 0)]))
        np.testing.assert_allclose(reverse_pagerank(g), fwd, atol=0)

    def test_star_reverse_matches_inverted_star(self):
        star = graph_of(4, [(0, 1), (0, 2), (0, 3)])
        inverted = graph_of(4, [(1, 0), (2, 0), (3, 0)])
        np.testing.assert_allclose(reverse_pagerank(star), pagerank(inverted), atol=0)


class TestStructFeatures:
    def test_degree_counting(self):
        g = graph_of(3, [(1, 0), (2, 0), (0, 1)])
        feats = node_struct_features(g)
        assert (feats[0].in_degree, feats[0].out_degree, feats[0].total_degree) == (2, 1, 3)

    def test_isolated_pair_symmetry(self):
        g = graph_of(2, [])
        feats = node_struct_features(g)
        for f in feats:
            assert (f.in_degree, f.out_degree, f.total_degree) == (0, 0, 0)
            assert f.pagerank == pytest.approx(0.5, abs=1e-12)
            assert f.reverse_pagerank == pytest.approx(0.5, abs=1e-12)

    def test_hand_counted_table(self):
        # n0 -> n1, n1 -> n2, n0 -> n2, n2 -> n0 (hand count of all degrees)
        g = graph_of(3, [(0, 1), (1, 2), (0, 2), (2, 0)])
        mat = struct_feature_matrix(g)
        np.testing.assert_array_equal(mat[:, :3], [[1, 2, 3], [1, 1, 2], [2, 1, 3]])
        assert mat[:, 3].sum() == pytest.approx(1.0, abs=1e-9)

    def test_parallel_typed_edges_count_twice(self):
        g = graph_of(
            2,
            [(0, 1), (0, 1)],
            types={(0, 1): EdgeType.PERFORMS},
        )
        # same (src, dst) with the same type collapses upstream, so fake two types
        g = KnowledgeGraph(
            nodes=g.nodes,
            edges=(
                Edge("n0", "n1", EdgeType.PERFORMS, "t"),
                Edge("n0", "n1", EdgeType.TARGETS, "t"),
            ),
        )
        feats = node_struct_features(g)
        assert feats[1].in_degree == 2 and feats[0].out_degree == 2

    def test_vector_order(self):
        g = graph_of(2, [(0, 1)])
        f = node_struct_features(g)[0]
        np.testing.assert_array_equal(
            f.as_vector(),
            [f.in_degree, f.out_degree, f.total_degree, f.pagerank, f.reverse_pagerank],
        )


def oracle_edge_betweenness(n, pairs):
    """Enumerate every shortest path per ordered pair; sum edge fractions."""
    adj = [[] for _ in range(n)]
    for u, v in set(pairs):
        adj[u].append(v)
    scores = {p: 0.0 for p in set(pairs)}
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            # BFS to find distance, then DFS to enumerate shortest paths
            dist = {s: 0}
            q = deque([s])
            while q:
                u = q.popleft()
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        q.append(v)
            if t not in dist:
                continue
            paths = []

            def walk(u, path):
                if u == t:
                    paths.append(list(path))
                    return
                for v in adj[u]:
                    if v in dist and dist[v] == dist[u] + 1 and dist[v] <= dist[t]:
                        path.append((u, v))
                        walk(v, path)
                        path.pop()

            walk(s, [])
            if not paths:
                continue
            w = 1.0 / len(paths)
            for path in paths:
                for e in path:
                    scores[e] += w
    return scores


class TestEdgeFeatures:
    def test_lonely_edge(self):
        g = graph_of(2, [(0, 1)])
        f = edge_features(g, 0)
        assert f.common_predecessors == 0 and f.common_successors == 0
        assert f.in_jaccard == 0.0 and f.out_jaccard == 0.0
        assert f.forward_path_len == UNREACHABLE_PATH_SENTINEL
        assert f.backward_path_len == UNREACHABLE_PATH_SENTINEL

    def test_triangle_detour(self):
        g = graph_of(3, [(0, 1), (1, 2), (0, 2)])
        feats = all_edge_features(g)
        idx = [(e.src, e.dst) for e in g.edges].index(("n0", "n2"))
        assert feats[idx].forward_path_len == 2.0  # n0 -> n1 -> n2 by hand BFS

    def test_bridge_betweenness_matches_oracle(self):
        # two 3-cliques joined by one bridge
        pairs = (
            list(itertools.permutations([0, 1, 2], 2))
            + list(itertools.permutations([3, 4, 5], 2))
            + [(2, 3)]
        )
        g = graph_of(6, pairs)
        ours = edge_betweenness(g)
        oracle = oracle_edge_betweenness(6, pairs)
        for pair, val in oracle.items():
            assert ours.get(pair, 0.0) == pytest.approx(val, abs=1e-9), pair

    def test_random_graphs_against_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            n, pairs = random_digraph(rng, max_nodes=10)
            g = graph_of(n, pairs)
            ours = edge_betweenness(g)
            oracle = oracle_edge_betweenness(n, pairs)
            for pair in set(pairs):
                assert ours.get(pair, 0.0) == pytest.approx(oracle[pair], abs=1e-9)

    def test_jaccard_against_set_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n, pairs = random_digraph(rng, max_nodes=10)
            if not pairs:
                continue
            g = graph_of(n, pairs)
            preds = [set() for _ in range(n)]
            succs = [set() for _ in range(n)]
            for u, v in pairs:
                preds[v].add(u)
                succs[u].add(v)
            uniq = [(g.node_index()[e.src], g.node_index()[e.dst]) for e in g.edges]
            for pos, (u, v) in enumerate(uniq):
                f = all_edge_features(g)[pos]
                inter = preds[u] & preds[v]
                union = preds[u] | preds[v]
                expect = len(inter) / len(union) if union else 0.0
                assert f.in_jaccard == pytest.approx(expect)
                assert 0.0 <= f.in_jaccard <= 1.0 and 0.0 <= f.out_jaccard <= 1.0
                assert f.common_predecessors == len(inter)

    def test_parallel_edge_removal_keeps_other_type(self):
        g = KnowledgeGraph(
            nodes=(Node("a", "a", NodeType.ENTITY), Node("b", "b", NodeType.ENTITY)),
            edges=(
                Edge("a", "b", EdgeType.PERFORMS, "t"),
                Edge("a", "b", EdgeType.TARGETS, "t"),
            ),
        )
        f = edge_features(g, 0)
        assert f.forward_path_len == 1.0  # the parallel typed edge still connects a -> b


class TestFeaturize:
    def _graph(self):
        return graph_of(4, [(0, 1), (1, 2), (2, 3), (3, 0)])

    def test_shapes(self):
        fg = featurize(self._graph(), 384)
        assert fg.label_embeddings.shape == (4, 384)
        assert fg.struct.shape == (4, 5)
        assert fg.edge_feats is None

    def test_edge_features_only_on_request(self):
        fg = featurize(self._graph(), 384, with_edge_features=True)
        assert fg.edge_feats.shape == (4, EDGE_FEATURE_DIM)

    def test_embeddings_unit_norm_from_fallback(self):
        fg = featurize(self._graph(), 768)
        np.testing.assert_allclose(np.linalg.norm(fg.label_embeddings, axis=1), 1.0, atol=1e-9)

    def test_save_load_round_trip(self, tmp_path):
        fg = featurize(self._graph(), 384, with_edge_features=True)
        save_featured(fg, tmp_path / "g0")
        back = load_featured(tmp_path / "g0")
        assert back.graph == fg.graph
        np.testing.assert_allclose(back.label_embeddings, fg.label_embeddings, atol=1e-7)
        np.testing.assert_allclose(back.struct, fg.struct, atol=1e-6)
        np.testing.assert_allclose(back.edge_feats, fg.edge_feats, atol=1e-5)

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError):
            featurize(KnowledgeGraph(nodes=(), edges=()), 384)

    def test_edge_feature_flag_is_strictly_additive(self):
        g = self._graph()
        plain = featurize(g, 384)
        flagged = featurize(g, 384, with_edge_features=True)
        assert plain.graph == flagged.graph
        np.testing.assert_array_equal(plain.label_embeddings, flagged.label_embeddings)
        np.testing.assert_array_equal(plain.struct, flagged.struct)
        assert plain.edge_feats is None and flagged.edge_feats is not None

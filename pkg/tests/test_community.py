import numpy as np
import pytest
from oracle_helpers import (oracle_edge_betweenness as _oracle_bw,
                            planted_two_block_graph,
                            random_test_graph as random_graph)

from hcfkit.community import (AbsoluteThreshold, CompanyGraph,
                              PercentileThreshold, build_graph,
                              cosine_similarity, edge_betweenness,
                              girvan_newman, graph_to_dot, graph_to_json,
                              top_neighbors, weighted_modularity)
from hcfkit.core import EmbeddingSet, HcfError
from hcfkit.rng import make_rng


def oracle_edge_betweenness(graph, adj=None):
    return _oracle_bw(graph.nodes, adj if adj is not None else graph.adj)


def graph_from_edges(edges):
    nodes = sorted({v for e in edges for v in e[:2]})
    adj = {v: {} for v in nodes}
    for a, b, *w in edges:
        weight = w[0] if w else 1.0
        adj[a][b] = weight
        adj[b][a] = weight
    return CompanyGraph(tuple(nodes), adj)


class TestCosine:
    def test_identical_is_one(self):
        assert cosine_similarity([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)

    def test_hand_computed(self):
        assert cosine_similarity([1, 1, 0], [1, 0, 0]) == pytest.approx(
            1 / np.sqrt(2), abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(HcfError):
            cosine_similarity([0, 0], [1, 0])


class TestBuildGraph:
    def test_identical_vectors_form_triangle(self):
        emb = EmbeddingSet(2, {f"v{k}": np.array([1.0, 1.0]) for k in range(3)})
        graph = build_graph(emb, AbsoluteThreshold(0.5))
        assert graph.n_edges() == 3
        assert all(w == pytest.approx(1.0) for _, _, w in graph.edges())

    def test_strict_inequality_at_threshold_one(self):
        emb = EmbeddingSet(2, {f"v{k}": np.array([1.0, 1.0]) for k in range(3)})
        graph = build_graph(emb, AbsoluteThreshold(1.0))
        assert graph.n_edges() == 0

    def test_two_orthogonal_identical_pairs(self):
        emb = EmbeddingSet(2, {"a1": np.array([1.0, 0.0]), "a2": np.array([1.0, 0.0]),
                               "b1": np.array([0.0, 1.0]), "b2": np.array([0.0, 1.0])})
        graph = build_graph(emb, AbsoluteThreshold(0.5))
        assert {(a, b) for a, b, _ in graph.edges()} == {("a1", "a2"), ("b1", "b2")}

    def test_percentile_threshold_nearest_rank(self):
        rng = make_rng(7, "pct")
        emb = EmbeddingSet(4, {f"v{k}": rng.normal(size=4) for k in range(12)})
        graph = build_graph(emb, PercentileThreshold(90.0))
        n_pairs = 12 * 11 // 2
        # strict inequality: at most 10% of pairs become edges
        assert 0 < graph.n_edges() <= int(np.ceil(0.1 * n_pairs))

    def test_zero_vector_rejected(self):
        emb = EmbeddingSet(2, {"a": np.array([0.0, 0.0]), "b": np.array([1.0, 0.0])})
        with pytest.raises(HcfError, match="zero vectors"):
            build_graph(emb, AbsoluteThreshold(0.5))


class TestEdgeBetweenness:
    def test_path_graph_hand_enumeration(self):
        graph = graph_from_edges([("A", "B"), ("B", "C")])
        bw = edge_betweenness(graph)
        assert bw[("A", "B")] == 2.0
        assert bw[("B", "C")] == 2.0

    def test_two_disjoint_edges(self):
        graph = graph_from_edges([("A", "B"), ("C", "D")])
        bw = edge_betweenness(graph)
        assert bw[("A", "B")] == 1.0
        assert bw[("C", "D")] == 1.0

    def test_complete_graph_k3(self):
        graph = graph_from_edges([("A", "B"), ("A", "C"), ("B", "C")])
        assert set(edge_betweenness(graph).values()) == {1.0}

    def test_matches_path_enumeration_oracle_exactly(self):
        rng = make_rng(51, "bw")
        for trial in range(50):
            graph = random_graph(rng)
            assert edge_betweenness(graph) == oracle_edge_betweenness(graph)

    def test_equal_split_among_equal_length_paths(self):
        # square A-B-D-C-A: pair (A, D) has two length-2 paths
        graph = graph_from_edges([("A", "B"), ("B", "D"), ("C", "D"), ("A", "C")])
        bw = edge_betweenness(graph)
        assert bw[("A", "B")] == pytest.approx(1.0 + 0.5 + 0.5)


class TestGirvanNewman:
    def test_bridge_between_triangles_removed_first(self):
        graph = graph_from_edges([
            ("a1", "a2"), ("a1", "a3"), ("a2", "a3"),
            ("b1", "b2"), ("b1", "b3"), ("b2", "b3"),
            ("a3", "b1"),
        ])
        result = girvan_newman(graph)
        assert result.removals[0] == ("a3", "b1")
        assert result.steps[0]["betweenness"] == pytest.approx(9.0)
        assert set(result.best.communities) == {("a1", "a2", "a3"),
                                                ("b1", "b2", "b3")}
        recomputed = weighted_modularity(graph, result.best.communities)
        assert result.best.modularity == pytest.approx(recomputed, abs=1e-12)

    def test_single_edge_yields_singletons(self):
        graph = graph_from_edges([("x", "y")])
        result = girvan_newman(graph)
        assert result.best.communities == (("x",), ("y",))

    def test_no_edges_rejected(self):
        graph = CompanyGraph(("a", "b"), {"a": {}, "b": {}})
        with pytest.raises(HcfError):
            girvan_newman(graph)

    def test_every_removal_was_globally_maximal(self):
        rng = make_rng(53, "gnver")
        for trial in range(12):
            graph = random_graph(rng, max_nodes=7)
            result = girvan_newman(graph)
            work = {v: dict(nbrs) for v, nbrs in graph.adj.items()}
            for edge in result.removals:
                oracle = oracle_edge_betweenness(graph, work)
                max_b = max(oracle.values())
                candidates = sorted(e for e, v in oracle.items() if v == max_b)
                assert edge == candidates[0]
                a, b = edge
                del work[a][b]
                del work[b][a]

    def test_partition_covers_all_nodes(self):
        rng = make_rng(57, "cover")
        for trial in range(10):
            graph = random_graph(rng)
            result = girvan_newman(graph)
            nodes = sorted(v for comm in result.best.communities for v in comm)
            assert nodes == sorted(graph.nodes)
            recomputed = weighted_modularity(graph, result.best.communities)
            assert abs(result.best.modularity - recomputed) < 1e-9

    def test_planted_two_block_recovery(self):
        for seed in range(10):
            graph, blocks = planted_two_block_graph(seed)
            result = girvan_newman(graph)
            assert set(result.best.communities) == set(blocks), f"seed {seed}"


class TestTopNeighbors:
    def _embeddings(self):
        return EmbeddingSet(3, {
            "q": np.array([1.0, 0.0, 0.0]),
            "dup": np.array([2.0, 0.0, 0.0]),
            "near": np.array([1.0, 0.4, 0.0]),
            "far": np.array([0.0, 0.0, 1.0]),
        })

    def test_duplicate_ranks_first_with_sim_one(self):
        ranked = top_neighbors(self._embeddings(), "q", k=2)
        assert ranked[0][0] == "dup"
        assert ranked[0][1] == pytest.approx(1.0)

    def test_k_above_available_returns_all(self):
        ranked = top_neighbors(self._embeddings(), "q", k=50)
        assert len(ranked) == 3

    def test_self_excluded_and_symmetric(self):
        emb = self._embeddings()
        ranked = top_neighbors(emb, "q", k=10)
        assert all(nid != "q" for nid, _ in ranked)
        for nid, sim in ranked:
            assert sim == pytest.approx(
                cosine_similarity(emb.rows["q"], emb.rows[nid]), abs=1e-12)

    def test_unknown_id_rejected(self):
        with pytest.raises(HcfError):
            top_neighbors(self._embeddings(), "nope")


class TestCommunityTopItems:
    def test_single_member_community_and_k_zero(self):
        from hcfkit.community import Partition, community_top_items
        from hcfkit.dcf import HcfConfig, init_model, score_all

        cfg = HcfConfig(d=4, hidden=(6,), dropout=(0.0,), seed=3)
        model = init_model(cfg, ("a", "b"), ("x", "y", "z"))
        model.entity_emb[:] = make_rng(0, "e").normal(0, 0.7, model.entity_emb.shape)
        model.item_emb[:] = make_rng(0, "i").normal(0, 0.7, model.item_emb.shape)
        part = Partition((("a",), ("b",)), 0.0)
        top = community_top_items(part, model, k=2)
        scores = score_all(model)
        own_rank = sorted(zip(model.item_ids, scores[0]),
                          key=lambda t: (-t[1], t[0]))[:2]
        assert top[0] == [(iid, pytest.approx(float(s))) for iid, s in own_rank]
        assert community_top_items(part, model, k=0) == {0: [], 1: []}


class TestExports:
    def test_json_and_dot_shapes(self):
        graph = graph_from_edges([("a", "b", 0.9), ("b", "c", 0.8)])
        result = girvan_newman(graph)
        doc = graph_to_json(graph, result.best)
        assert {n["id"] for n in doc["nodes"]} == {"a", "b", "c"}
        assert len(doc["edges"]) == 2
        assert doc["modularity"] == result.best.modularity
        dot = graph_to_dot(graph, result.best)
        assert dot.startswith("graph communities {")
        assert '"a" -- "b"' in dot

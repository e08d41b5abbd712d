import numpy as np
import pytest

from etud.community import (
    Partition,
    export_partition,
    import_partition,
    label_propagation,
    louvain,
    louvain_with_trace,
    modularity,
)
from etud.hetnet import GraphError, HomoGraph

from oracles import brute_modularity


def clique_edges(nodes, w=1.0):
    return [(a, b, w) for i, a in enumerate(nodes) for b in nodes[i + 1:]]


def two_cliques(bridge=0.01, scale=1.0):
    left = [f"a{i}" for i in range(4)]
    right = [f"b{i}" for i in range(4)]
    edges = clique_edges(left, scale) + clique_edges(right, scale)
    if bridge:
        edges.append(("a0", "b0", bridge * scale))
    return HomoGraph.from_edges(left + right, edges)


def matrix(g):
    w = np.zeros((g.num_nodes, g.num_nodes))
    np.add.at(w, (g.src, g.dst), g.weight)
    return w


def random_graph(seed, n=None, density=0.2):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 30))
    ids = [f"v{i:02d}" for i in range(n)]
    edges = [
        (ids[i], ids[j], float(rng.random()))
        for i in range(n)
        for j in range(n)
        if i != j and rng.random() < density
    ]
    return HomoGraph.from_edges(ids, edges), rng


class TestModularity:
    def test_single_community(self):
        g = two_cliques()
        p = Partition.from_labels(g.node_ids, [0] * 8)
        assert modularity(g, p) == pytest.approx(0.0, abs=1e-15)

    def test_two_disconnected_cliques(self):
        g = two_cliques(bridge=0)
        p = Partition.from_labels(g.node_ids, [0] * 4 + [1] * 4)
        assert modularity(g, p) == pytest.approx(0.5, abs=1e-15)

    def test_zero_weight(self):
        g = HomoGraph.from_edges(["a", "b"], [("a", "b", 0.0)])
        assert modularity(g, Partition.from_labels(g.node_ids, [0, 1])) == 0.0

    @pytest.mark.parametrize("seed", range(25))
    def test_random_against_oracle(self, seed):
        g, rng = random_graph(seed)
        labels = rng.integers(0, 4, size=g.num_nodes)
        p = Partition.from_labels(g.node_ids, labels)
        q = modularity(g, p)
        assert abs(q - brute_modularity(matrix(g), p.labels)) < 1e-12
        assert -0.5 <= q <= 1.0


class TestLouvain:
    def test_two_cliques(self):
        p = louvain(two_cliques(), np.random.default_rng(0))
        assert sorted(map(sorted, p.members())) == [
            ["a0", "a1", "a2", "a3"],
            ["b0", "b1", "b2", "b3"],
        ]

    def test_no_edges(self):
        g = HomoGraph.from_edges(["a", "b", "c"], [])
        assert louvain(g, np.random.default_rng(0)).num_communities == 3

    def test_all_zero_weights(self):
        g = HomoGraph.from_edges(["a", "b"], [("a", "b", 0.0)])
        assert louvain(g, np.random.default_rng(0)).num_communities == 2

    @pytest.mark.parametrize("seed", range(10))
    def test_trace_monotone_and_beats_singletons(self, seed):
        g, _ = random_graph(seed, n=40, density=0.08)
        p, trace = louvain_with_trace(g, np.random.default_rng(seed))
        assert all(b >= a for a, b in zip(trace, trace[1:]))
        assert trace[-1] == pytest.approx(modularity(g, p), abs=1e-12)
        singletons = Partition.from_labels(g.node_ids, range(g.num_nodes))
        assert modularity(g, p) >= modularity(g, singletons)

    @pytest.mark.parametrize("factor", [2.0, 0.5, 8.0, 0.125])
    def test_scale_invariance(self, factor):
        g, _ = random_graph(3, n=40, density=0.1)
        scaled = HomoGraph.from_edges(
            g.node_ids, [(g.node_ids[s], g.node_ids[t], w * factor) for s, t, w in zip(g.src, g.dst, g.weight)]
        )
        p1 = louvain(g, np.random.default_rng(11))
        p2 = louvain(scaled, np.random.default_rng(11))
        assert p1 == p2
        assert modularity(g, p1) == modularity(scaled, p1)

    def test_deterministic(self):
        g, _ = random_graph(4, n=50, density=0.06)
        assert louvain(g, np.random.default_rng(5)) == louvain(g, np.random.default_rng(5))


class TestLabelPropagation:
    def test_disconnected_cliques(self):
        p = label_propagation(two_cliques(bridge=0), np.random.default_rng(0))
        assert p.num_communities == 2
        assert p.labels.tolist() == [0] * 4 + [1] * 4

    def test_single_node(self):
        g = HomoGraph.from_edges(["a"], [])
        assert label_propagation(g, np.random.default_rng(0)).num_communities == 1

    def test_deterministic(self):
        g, _ = random_graph(8, n=50, density=0.05)
        assert label_propagation(g, np.random.default_rng(2)) == label_propagation(g, np.random.default_rng(2))


class TestPartitionFiles:
    def test_totality(self):
        p = Partition.from_labels(list("abcde"), [7, 7, 3, 9, 3])
        assert p.labels.tolist() == [0, 0, 1, 2, 1]
        assert p.sizes.sum() == 5

    def test_round_trip(self, tmp_path):
        g, rng = random_graph(1, n=20)
        p = Partition.from_labels(g.node_ids, rng.integers(0, 5, size=20))
        export_partition(p, tmp_path / "p.tsv")
        assert import_partition(tmp_path / "p.tsv", g.node_ids) == p
        assert import_partition(tmp_path / "p.tsv") == p

    def test_duplicate(self, tmp_path):
        (tmp_path / "p.tsv").write_text("a\t1\na\t2\n")
        with pytest.raises(GraphError, match="duplicate"):
            import_partition(tmp_path / "p.tsv")

    def test_missing_nodes_listed(self, tmp_path):
        (tmp_path / "p.tsv").write_text("a\tx\n")
        with pytest.raises(GraphError, match="b, c"):
            import_partition(tmp_path / "p.tsv", ["a", "b", "c"])

    def test_relabels_densely(self, tmp_path):
        (tmp_path / "p.tsv").write_text("# external ids\na\tcomm42\nb\tcomm7\nc\tcomm42\n")
        p = import_partition(tmp_path / "p.tsv", ["a", "b", "c"])
        assert p.labels.tolist() == [0, 1, 0]

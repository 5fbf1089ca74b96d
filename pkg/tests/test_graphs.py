"""
Tests for graph data
====================

Graph / Batch containers, neighbourhood aggregation, the JSON-lines dataset
format and the synthetic generators.
"""

import hashlib

import networkx as nx
import numpy as np
import pytest

from engine.tensor import Tensor
from errors import DimensionError, FormatError, ParseError, UsageError, ValidationError
from graphs.aggregate import gcn_coefficients, neighbor_sum
from graphs.containers import Graph, batch_graphs
from graphs.dataset_io import load_dataset, save_dataset
from graphs import synthetic
from graphs.synthetic import gen_synthetic, generate, random_graph


def dense_adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.num_nodes, g.num_nodes))
    for u, v in g.edge_pairs:
        A[u, v] = A[v, u] = 1.0
    return A


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# =============================================================================
# Graph container
# =============================================================================

class TestGraph:
    """CSR construction and validation."""

    def test_csr_invariants(self, small_graph):
        g = small_graph
        assert np.all(np.diff(g.offsets) >= 0)
        assert g.offsets[-1] == g.num_edges == 2 * len(g.edge_pairs)
        assert np.all(g.columns < g.num_nodes)
        assert not np.any(g.rows == g.columns)

    def test_neighbours_are_symmetric(self, path3):
        assert list(path3.neighbors(1)) == [0, 2]
        assert list(path3.neighbors(0)) == [1]
        np.testing.assert_array_equal(path3.degrees, [1, 2, 1])

    def test_self_loop_rejected(self):
        with pytest.raises(ValidationError, match="self-loop"):
            Graph(2, [[1, 1]], np.zeros((2, 1)))

    def test_out_of_range_edge(self):
        with pytest.raises(ValidationError, match="node 7"):
            Graph(3, [[0, 7]], np.zeros((3, 1)))

    def test_duplicate_edge(self):
        with pytest.raises(ValidationError):
            Graph(3, [[0, 1], [1, 0]], np.zeros((3, 1)))

    def test_feature_rows_must_match(self):
        with pytest.raises(ValidationError):
            Graph(3, [], np.zeros((2, 1)))

    def test_arrays_are_read_only(self, path3):
        with pytest.raises(ValueError):
            path3.x[0, 0] = 5.0

    def test_directed_edge_attributes_follow_pairs(self):
        g = Graph(3, [[0, 1], [1, 2]], np.zeros((3, 1)), edge_attr=[[10.0], [20.0]])
        attr = g.directed_edge_attr()
        for i in range(g.num_edges):
            u, v = g.rows[i], g.columns[i]
            assert attr[i, 0] == (10.0 if {u, v} == {0, 1} else 20.0)


# =============================================================================
# Aggregation
# =============================================================================

class TestNeighborSum:
    """Σ over N(u) against a dense adjacency oracle."""

    def test_two_node_swap(self):
        g = Graph(2, [[0, 1]], [[1.0], [2.0]])
        np.testing.assert_array_equal(neighbor_sum(g, g.node_features()).data, [[2.0], [1.0]])

    def test_isolated_node_is_zero(self):
        g = Graph(3, [[0, 1]], [[1.0], [2.0], [3.0]])
        assert neighbor_sum(g, g.node_features()).data[2, 0] == 0.0

    @pytest.mark.parametrize("n", [1, 5, 17, 32])
    def test_dense_oracle(self, rng, n):
        g = random_graph(rng, n, 0.3, 3)
        expected = dense_adjacency(g) @ g.x
        np.testing.assert_allclose(neighbor_sum(g, g.node_features()).data, expected, atol=1e-12)

    def test_permutation_consistency(self, rng):
        g = random_graph(rng, 9, 0.4, 2)
        perm = rng.permutation(9)
        gp = g.permuted(perm)
        out = neighbor_sum(g, g.node_features()).data
        out_p = neighbor_sum(gp, gp.node_features()).data
        np.testing.assert_allclose(out_p[perm], out, atol=1e-12)

    def test_row_count_mismatch(self, path3):
        with pytest.raises(DimensionError, match="4"):
            neighbor_sum(path3, Tensor(np.ones((4, 1))))

    def test_gcn_coefficients(self, path3):
        root_inv, inv = gcn_coefficients(path3)
        np.testing.assert_allclose(inv, [1 / 2, 1 / 3, 1 / 2])
        np.testing.assert_allclose(root_inv ** 2, inv)


# =============================================================================
# Batching
# =============================================================================

class TestBatch:
    """Disjoint-union batching."""

    def test_offsets_and_index(self, rng):
        a, b = random_graph(rng, 2, 1.0, 3), random_graph(rng, 3, 1.0, 3)
        batch = batch_graphs([a, b])
        assert batch.num_nodes == 5
        np.testing.assert_array_equal(batch.graph_offsets, [0, 2])
        np.testing.assert_array_equal(batch.graph_index, [0, 0, 1, 1, 1])
        assert batch.num_graphs == 2

    def test_no_cross_graph_edges(self, graph_pair):
        batch = batch_graphs(graph_pair)
        gi = batch.graph_index
        assert np.all(gi[batch.graph.rows] == gi[batch.graph.columns])

    def test_single_graph(self, path3):
        batch = batch_graphs([path3])
        np.testing.assert_array_equal(batch.graph.x, path3.x)
        np.testing.assert_array_equal(batch.graph.edge_pairs, path3.edge_pairs)
        np.testing.assert_array_equal(batch.graph_index, [0, 0, 0])

    def test_heterogeneous_widths(self, rng):
        with pytest.raises(FormatError):
            batch_graphs([random_graph(rng, 3, 0.5, 2), random_graph(rng, 3, 0.5, 3)])

    def test_labels_are_stacked_and_shifted(self):
        a = Graph(2, [[0, 1]], np.zeros((2, 1)), None, "pairs", [[0, 1, 1]])
        b = Graph(3, [[1, 2]], np.zeros((3, 1)), None, "pairs", [[0, 2, 0]])
        batch = batch_graphs([a, b])
        np.testing.assert_array_equal(batch.y, [[0, 1, 1], [2, 4, 0]])

    def test_empty_list(self):
        with pytest.raises(ValidationError):
            batch_graphs([])


# =============================================================================
# Dataset files
# =============================================================================

class TestDatasetIO:
    """JSON-lines load / save."""

    def test_minimal_line(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text('{"num_nodes": 1, "edges": [], "x": [[0.5]], "y_graph": 0}\n')
        (g,) = load_dataset(str(path))
        assert g.num_nodes == 1 and g.num_edges == 0
        assert g.label_kind == "graph" and int(g.y) == 0

    def test_round_trip(self, tmp_path):
        graphs = gen_synthetic("sbm-node", 3, count=10, blocks=2, block_size=5)
        path = tmp_path / "sbm.jsonl"
        assert save_dataset(graphs, str(path)) == 10
        loaded = load_dataset(str(path))
        assert len(loaded) == 10
        for a, b in zip(graphs, loaded):
            assert a.num_nodes == b.num_nodes
            np.testing.assert_array_equal(a.edge_pairs, b.edge_pairs)
            assert np.array_equal(a.x, b.x)          # bit-exact floats
            np.testing.assert_array_equal(a.y, b.y)
            assert a.label_kind == b.label_kind

    def test_edge_attributes_round_trip(self, tmp_path, rng):
        base = random_graph(rng, 5, 0.6, 2, edge_dim=3)
        g = Graph(base.num_nodes, base.edge_pairs, base.x, base.edge_attr, "graph", 1)
        path = tmp_path / "attr.jsonl"
        save_dataset([g], str(path))
        (back,) = load_dataset(str(path))
        assert np.array_equal(back.edge_attr, g.edge_attr)

    def test_out_of_range_index_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"num_nodes": 1, "edges": [], "x": [[0]], "y_graph": 0}\n'
            '{"num_nodes": 3, "edges": [[0, 7]], "x": [[0], [0], [0]], "y_graph": 1}\n'
        )
        with pytest.raises(ValidationError) as exc:
            load_dataset(str(path))
        assert "line 2" in str(exc.value) and "7" in str(exc.value)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"num_nodes": 1, "edges": [], "x": [[0]], "y_graph": 0}\n{"num_nodes": \n')
        with pytest.raises(ParseError) as exc:
            load_dataset(str(path))
        assert exc.value.line == 2

    def test_needs_exactly_one_label(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"num_nodes": 1, "edges": [], "x": [[0]], "y_graph": 0, "y_node": [0]}\n')
        with pytest.raises(ParseError):
            load_dataset(str(path))

    @pytest.mark.parametrize("line", [
        '{"num_nodes": 3, "edges": [[0, 1, 2]], "x": [[0], [0], [0]], "y_graph": 0}',
        '{"num_nodes": 3, "edges": [0, 1, 1, 2], "x": [[0], [0], [0]], "y_graph": 0}',
        '{"num_nodes": 3, "edges": [[0, 1], [2]], "x": [[0], [0], [0]], "y_graph": 0}',
        '{"num_nodes": 3, "edges": [[0, 1]], "x": [[0], [0], [0]], "y_pairs": [[0, 2, 1, 0]]}',
        '{"num_nodes": 3, "edges": [[0, 1]], "x": [[0], [0], [0]], "y_pairs": [0, 2, 1]}',
    ])
    def test_misshapen_integer_tables(self, tmp_path, line):
        path = tmp_path / "shape.jsonl"
        path.write_text('{"num_nodes": 1, "edges": [], "x": [[0]], "y_graph": 0}\n' + line + "\n")
        with pytest.raises(ParseError) as exc:
            load_dataset(str(path))
        assert exc.value.line == 2

    def test_empty_pair_list_is_zero_rows(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"num_nodes": 2, "edges": [[0, 1]], "x": [[0], [0]], "y_pairs": []}\n')
        (g,) = load_dataset(str(path))
        assert g.y.shape == (0, 3)

    def test_invalid_utf8_names_line(self, tmp_path):
        path = tmp_path / "bytes.jsonl"
        path.write_bytes(b'{"num_nodes": 1, "edges": [], "x": [[0]], "y_graph": 0}\n\xff\xfe\n')
        with pytest.raises(ParseError) as exc:
            load_dataset(str(path))
        assert exc.value.line == 2

    def test_unlabelled_graph_cannot_be_saved(self, tmp_path, path3):
        with pytest.raises(FormatError):
            save_dataset([path3], str(tmp_path / "x.jsonl"))


# =============================================================================
# Synthetic generators
# =============================================================================

class TestSynthetic:
    """Deterministic desk-scale datasets."""

    def test_cycle_and_path_edge_counts(self):
        cycle, path = gen_synthetic("cycle-vs-path", 0, n=4, count=2)
        assert (int(cycle.y), len(cycle.edge_pairs)) == (0, 4)
        assert (int(path.y), len(path.edge_pairs)) == (1, 3)
        np.testing.assert_array_equal(cycle.x, 1.0)

    def test_same_seed_same_file(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(gen_synthetic("pair-contact", 5, count=3, nodes=16), str(a))
        save_dataset(gen_synthetic("pair-contact", 5, count=3, nodes=16), str(b))
        assert file_digest(a) == file_digest(b)

    def test_different_seed_differs(self):
        a = gen_synthetic("sbm-node", 1, count=1, block_size=6)[0]
        b = gen_synthetic("sbm-node", 2, count=1, block_size=6)[0]
        assert not np.array_equal(a.x, b.x)

    def test_sbm_intra_block_tally(self):
        ds = generate("sbm-node", 0, count=16, blocks=2, block_size=20, p_in=0.9, p_out=0.05)
        assert ds.stats["intra_expected"] == pytest.approx(16 * 0.9 * 190 * 2)
        assert ds.stats["intra_within_3sigma"]
        g = ds.graphs[0]
        assert g.num_nodes == 40 and g.label_kind == "node"
        np.testing.assert_array_equal(np.bincount(g.y), [20, 20])

    def test_pair_contact_pairs_are_far_apart(self):
        for g in gen_synthetic("pair-contact", 4, count=4, nodes=20):
            nxg = nx.Graph()
            nxg.add_nodes_from(range(g.num_nodes))
            nxg.add_edges_from(g.edge_pairs.tolist())
            hops = dict(nx.all_pairs_shortest_path_length(nxg))
            positives = int(g.y[:, 2].sum())
            assert len(g.y) - positives <= positives
            for u, v, _ in g.y:
                assert hops[int(u)].get(int(v), np.inf) >= 3

    def test_unknown_kind_lists_valid_kinds(self):
        with pytest.raises(UsageError) as exc:
            gen_synthetic("bogus", 0)
        assert "cycle-vs-path" in str(exc.value)

    def test_bad_size_parameter(self):
        with pytest.raises(UsageError):
            gen_synthetic("cycle-vs-path", 0, radius=0.3)

    def test_internal_type_error_is_not_a_usage_error(self, monkeypatch):
        def broken(rng, n: int = 6, count: int = 64):
            raise TypeError("bad arithmetic inside the generator")

        monkeypatch.setitem(synthetic.GENERATORS, "cycle-vs-path", broken)
        with pytest.raises(TypeError, match="inside the generator") as exc:
            gen_synthetic("cycle-vs-path", 0, n=4)
        assert not isinstance(exc.value, UsageError)

"""
Tests for the neural layers
===========================

Differential encoder, the three message-passing kinds, differential
multi-head attention, the hybrid encoder block and readout.  Dense numpy
computations serve as oracles throughout.
"""

import numpy as np
import pytest

from engine.gradcheck import grad_check
from engine.tensor import Tensor, parameter, tsum
from errors import ConfigError, ContractError, DimensionError
from graphs.containers import Graph, batch_graphs
from graphs.synthetic import random_graph
from layers.attention import MultiHeadAttention, mha_diff_forward, segment_mask
from layers.block import EncoderBlock, encoder_block
from layers.ffn import FFN, diff_enc
from layers.mpnn import GATLayer, GCNLayer, GatedGCNLayer, build_mpnn, mpnn_forward
from layers.readout import readout


def zero_encoders(module):
    for m in module.modules():
        if getattr(m, "diff_enc", None) is not None:
            m.diff_enc.zero_()


def relu_encoder(enc: FFN):
    """Make a 1-wide encoder compute ReLU(x)."""
    enc.W1.data[...] = 1.0
    enc.b1.data[...] = 0.0
    enc.W2.data[...] = 1.0
    enc.b2.data[...] = 0.0
    return enc


def edge_embeddings(g: Graph, d: int, rng) -> Tensor:
    return Tensor(rng.standard_normal((g.num_edges, d)))


# =============================================================================
# Differential encoder
# =============================================================================

class TestDiffEnc:
    """FFN applied to the differential representation."""

    def test_zero_parameters_give_zero(self, rng):
        enc = FFN(4, 4, rng).zero_()
        out = diff_enc(Tensor(rng.standard_normal((5, 4))), enc)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_zero_delta_with_zero_biases(self, rng):
        enc = FFN(3, 3, rng)
        np.testing.assert_array_equal(diff_enc(Tensor(np.zeros((2, 3))), enc).data, 0.0)

    def test_hand_evaluation(self, rng):
        enc = FFN(1, 1, rng)
        enc.W1.data[...] = 2.0
        enc.b1.data[...] = -1.0
        enc.W2.data[...] = 3.0
        enc.b2.data[...] = 0.0
        assert diff_enc(Tensor([[1.0]]), enc).item() == 3.0

    def test_width_mismatch(self, rng):
        with pytest.raises(DimensionError):
            diff_enc(Tensor(np.zeros((2, 3))), FFN(4, 4, rng))


# =============================================================================
# Message passing
# =============================================================================

class TestGCN:
    """Symmetric-normalised convolution with the self / neighbour split."""

    def test_dense_normalised_adjacency_oracle(self, rng, path3):
        layer = GCNLayer(1, rng, use_diff=True)
        layer.W.data[...] = 1.0
        relu_encoder(layer.diff_enc)
        out, _ = layer(path3, path3.node_features())

        A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        D = np.diag(1.0 / np.sqrt(A.sum(axis=1) + 1.0))
        H = path3.x
        nb = D @ A @ D @ H
        own = (D @ D) @ H
        expected = np.maximum(D @ (A + np.eye(3)) @ D @ H + np.maximum(nb - own, 0.0), 0.0)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_single_node_delta_is_minus_self_message(self, rng):
        g = Graph(1, [], [[1.5, -0.5]])
        layer = GCNLayer(2, rng)
        nb, own = layer.messages(g, g.node_features())
        np.testing.assert_array_equal(nb.data, 0.0)
        np.testing.assert_allclose((nb - own).data, -(g.x @ layer.W.data), atol=1e-15)

    def test_gradients(self, rng, small_graph):
        layer = GCNLayer(4, rng, use_diff=True)
        R = rng.standard_normal((small_graph.num_nodes, 4))
        H = Tensor(small_graph.x)
        report = grad_check(lambda h, *_: tsum(layer(small_graph, h)[0] * R), [H] + layer.parameters())
        assert report.max_error < 1e-4


class TestGAT:
    """Attention over N(u) and u itself."""

    def test_zero_attention_vector_averages_closed_neighbourhood(self, rng, path3):
        layer = GATLayer(1, rng)
        layer.heads[0].a.data[...] = 0.0
        out, _ = layer(path3, path3.node_features())
        W = layer.heads[0].W.data
        HW = path3.x @ W
        expected = np.array([(HW[0] + HW[1]) / 2, (HW[0] + HW[1] + HW[2]) / 3, (HW[1] + HW[2]) / 2])
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_heads_are_concatenated(self, rng, small_graph):
        layer = GATLayer(4, rng, use_diff=True, heads=2)
        out, _ = layer(small_graph, small_graph.node_features())
        assert out.shape == (small_graph.num_nodes, 4)
        assert [h.W.shape for h in layer.heads] == [(4, 2), (4, 2)]

    def test_indivisible_heads(self, rng):
        with pytest.raises(ConfigError):
            GATLayer(5, rng, heads=2)


class TestGatedGCN:
    """Edge-gated convolution with residual update."""

    def test_needs_edge_embeddings(self, rng, small_graph):
        layer = GatedGCNLayer(4, rng)
        with pytest.raises(ContractError):
            layer(small_graph, small_graph.node_features())

    def test_edge_embedding_shape(self, rng, small_graph):
        layer = GatedGCNLayer(4, rng)
        with pytest.raises(DimensionError):
            layer(small_graph, small_graph.node_features(), E=Tensor(np.zeros((small_graph.num_edges + 1, 4))))

    def test_updates_edges(self, rng, small_graph):
        layer = GatedGCNLayer(4, rng)
        E = edge_embeddings(small_graph, 4, rng)
        H_out, E_out = layer(small_graph, small_graph.node_features(), E=E)
        assert H_out.shape == (small_graph.num_nodes, 4)
        assert E_out.shape == E.shape

    def test_zero_weights_reduce_to_residual(self, rng, small_graph):
        layer = GatedGCNLayer(4, rng)
        for p in (layer.U, layer.V, layer.A, layer.B, layer.C):
            p.data[...] = 0.0
        E = edge_embeddings(small_graph, 4, rng)
        H_out, E_out = layer(small_graph, small_graph.node_features(), E=E)
        np.testing.assert_array_equal(H_out.data, small_graph.x)
        np.testing.assert_array_equal(E_out.data, E.data)


class TestMPNNCommon:
    """Properties shared by every message-passing kind."""

    @pytest.mark.parametrize("kind", ["gcn", "gat", "gatedgcn"])
    def test_zeroed_encoder_reduces_to_plain_layer(self, rng, small_graph, kind):
        layer = build_mpnn(kind, 4, rng, use_diff=True)
        zero_encoders(layer)
        E = edge_embeddings(small_graph, 4, rng) if kind == "gatedgcn" else None
        H = small_graph.node_features()
        with_diff, _ = mpnn_forward(kind, small_graph, H, layer, True, E)
        plain, _ = mpnn_forward(kind, small_graph, H, layer, False, E)
        np.testing.assert_array_equal(with_diff.data, plain.data)

    @pytest.mark.parametrize("kind", ["gcn", "gat", "gatedgcn"])
    def test_permutation_equivariance(self, rng, kind):
        g = random_graph(rng, 8, 0.4, 4, edge_dim=4 if kind == "gatedgcn" else 0)
        layer = build_mpnn(kind, 4, rng, use_diff=True).eval()
        perm = rng.permutation(8)
        gp = g.permuted(perm)
        E = Tensor(g.directed_edge_attr()) if kind == "gatedgcn" else None
        Ep = Tensor(gp.directed_edge_attr()) if kind == "gatedgcn" else None
        out, _ = layer(g, g.node_features(), E=E)
        out_p, _ = layer(gp, gp.node_features(), E=Ep)
        np.testing.assert_allclose(out_p.data[perm], out.data, atol=1e-9)

    def test_diff_without_encoder(self, rng, small_graph):
        layer = build_mpnn("gcn", 4, rng, use_diff=False)
        with pytest.raises(ConfigError):
            layer(small_graph, small_graph.node_features(), use_diff=True)

    def test_kind_mismatch(self, rng, small_graph):
        layer = build_mpnn("gcn", 4, rng, use_diff=False)
        with pytest.raises(ConfigError):
            mpnn_forward("gat", small_graph, small_graph.node_features(), layer, False)

    def test_unknown_kind(self, rng):
        with pytest.raises(ConfigError):
            build_mpnn("sage", 4, rng, use_diff=False)

    def test_wrong_width(self, rng, small_graph):
        layer = build_mpnn("gcn", 3, rng, use_diff=False)
        with pytest.raises(DimensionError):
            layer(small_graph, small_graph.node_features())

    def test_encoder_present_iff_switch_on(self, rng):
        names = [n for n, _ in build_mpnn("gcn", 4, rng, use_diff=True).named_parameters()]
        assert "diff_enc.W1" in names
        names = [n for n, _ in build_mpnn("gcn", 4, rng, use_diff=False).named_parameters()]
        assert not any(n.startswith("diff_enc") for n in names)


# =============================================================================
# Attention
# =============================================================================

class TestAttention:
    """Masked multi-head attention with per-head differential encoders."""

    def test_single_node(self, rng):
        mha = MultiHeadAttention(2, 1, rng, use_diff=True)
        head = mha.heads[0]
        H = Tensor([[0.3, -1.2]])
        A, V = head.weights(H, segment_mask([0]))
        np.testing.assert_array_equal(A.data, [[1.0]])
        O = (A @ V).data
        np.testing.assert_array_equal(O, V.data)
        np.testing.assert_array_equal(O - 2 * np.diag(A.data)[:, None] * V.data, -V.data)

    def test_two_node_hand_computation(self, rng):
        mha = MultiHeadAttention(1, 1, rng, use_diff=True)
        head = mha.heads[0]
        head.W_Q.data[...] = 0.0
        head.W_K.data[...] = 0.0
        head.W_V.data[...] = 1.0
        relu_encoder(head.diff_enc)
        mha.W_MHA.data[...] = 1.0
        # uniform weights: O = mean(v) = 2, delta = 2 - v = [1, -1]
        out = mha_diff_forward(Tensor([[1.0], [3.0]]), mha, np.array([0, 0]), use_diff=True)
        np.testing.assert_allclose(out.data, [[3.0], [2.0]], atol=1e-15)

    def test_zeroed_encoders_reduce_to_plain_attention(self, rng, small_graph):
        mha = MultiHeadAttention(4, 2, rng, use_diff=True)
        zero_encoders(mha)
        seg = np.zeros(small_graph.num_nodes, dtype=np.int64)
        H = small_graph.node_features()
        np.testing.assert_array_equal(mha(H, seg, use_diff=True).data, mha(H, seg, use_diff=False).data)

    def test_rows_sum_to_one_under_mask(self, rng, graph_pair):
        batch = batch_graphs(graph_pair)
        mha = MultiHeadAttention(4, 2, rng)
        for head in mha.heads:
            A, _ = head.weights(batch.graph.node_features(), segment_mask(batch.graph_index))
            np.testing.assert_allclose(A.data.sum(axis=1), 1.0, atol=1e-12)
            cross = batch.graph_index[:, None] != batch.graph_index[None, :]
            assert np.all(A.data[cross] == 0.0)

    def test_other_graph_is_bit_identical(self, rng, graph_pair):
        batch = batch_graphs(graph_pair)
        mha = MultiHeadAttention(4, 2, rng, use_diff=True)
        before = mha(batch.graph.node_features(), batch.graph_index).data
        shaken = batch.graph.x.copy()
        shaken[:5] += 10.0 * rng.standard_normal((5, 4))
        after = mha(Tensor(shaken), batch.graph_index).data
        assert np.array_equal(before[5:], after[5:])

    def test_large_inputs_stay_finite(self, rng, small_graph):
        mha = MultiHeadAttention(4, 2, rng, use_diff=True)
        big = small_graph.x / np.linalg.norm(small_graph.x) * 1e3
        out = mha(Tensor(big), np.zeros(small_graph.num_nodes, dtype=np.int64))
        assert np.all(np.isfinite(out.data))

    def test_head_count_must_divide_width(self, rng):
        with pytest.raises(ConfigError):
            MultiHeadAttention(6, 4, rng)

    def test_one_encoder_per_head(self, rng):
        mha = MultiHeadAttention(8, 4, rng, use_diff=True)
        assert [h.diff_enc.width for h in mha.heads] == [2, 2, 2, 2]

    def test_gradients(self, rng, small_graph):
        mha = MultiHeadAttention(4, 2, rng, use_diff=True)
        seg = np.zeros(small_graph.num_nodes, dtype=np.int64)
        R = rng.standard_normal((small_graph.num_nodes, 4))
        H = Tensor(small_graph.x)
        report = grad_check(lambda h, *_: tsum(mha(h, seg) * R), [H] + mha.parameters())
        assert report.max_error < 1e-4


# =============================================================================
# Encoder block
# =============================================================================

class TestEncoderBlock:
    """Parallel local / global branches with residual fusion."""

    @staticmethod
    def make_block(rng, d=4):
        return EncoderBlock(d, rng, build_mpnn("gcn", d, rng, True), MultiHeadAttention(d, 2, rng, True))

    def test_compositional_oracle(self, rng):
        g = random_graph(rng, 4, 0.6, 4)
        block = self.make_block(rng).eval()
        H = g.node_features()
        local, _ = block.mpnn(g, H)
        glob = block.mha(H, np.zeros(4, dtype=np.int64))
        h_bar = block.bn_local(local) + block.bn_global(glob) + H
        expected = block.ffn(h_bar) + h_bar
        out, _ = encoder_block(g, H, block)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)

    def test_zero_ffn_returns_h_bar(self, rng, small_graph):
        block = self.make_block(rng).eval()
        block.ffn.zero_()
        H = small_graph.node_features()
        local, _ = block.mpnn(small_graph, H)
        glob = block.mha(H, np.zeros(small_graph.num_nodes, dtype=np.int64))
        h_bar = block.bn_local(local) + block.bn_global(glob) + H
        np.testing.assert_array_equal(block(small_graph, H)[0].data, h_bar.data)

    def test_silent_branches_leave_residual_path(self, rng, small_graph):
        block = self.make_block(rng).eval()
        for p in block.mpnn.parameters() + block.mha.parameters():
            p.data[...] = 0.0
        H = small_graph.node_features()
        expected = block.ffn(H).data + small_graph.x
        np.testing.assert_allclose(block(small_graph, H)[0].data, expected, atol=1e-15)

    def test_batch_matches_per_graph(self, rng, graph_pair):
        block = self.make_block(rng).eval()
        batch = batch_graphs(graph_pair)
        out, _ = block(batch, batch.graph.node_features())
        singles = [block(g, g.node_features())[0].data for g in graph_pair]
        np.testing.assert_allclose(out.data, np.concatenate(singles), atol=1e-10)

    def test_needs_a_branch(self, rng):
        with pytest.raises(ConfigError):
            EncoderBlock(4, rng, None, None)

    def test_single_branch_owns_only_its_parameters(self, rng):
        block = EncoderBlock(4, rng, build_mpnn("gcn", 4, rng, False), None)
        names = [n for n, _ in block.named_parameters()]
        assert not any(n.startswith(("mha", "bn_global")) for n in names)

    def test_gradients(self, rng, small_graph):
        block = self.make_block(rng).eval()
        R = rng.standard_normal((small_graph.num_nodes, 4))
        H = parameter(small_graph.x)
        report = grad_check(lambda h, *_: tsum(block(small_graph, h)[0] * R), [H] + block.parameters())
        assert report.max_error < 1e-4


# =============================================================================
# Readout
# =============================================================================

class TestReadout:
    """Per-graph pooling."""

    def test_sum(self):
        g = Graph(3, [], [[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(readout(g, g.node_features(), "sum").data, [[6.0]])

    def test_mean_of_identical_rows(self):
        g = Graph(3, [[0, 1]], [[1.5, -2.0]] * 3)
        np.testing.assert_array_equal(readout(g, g.node_features(), "mean").data, [[1.5, -2.0]])

    @pytest.mark.parametrize("mode", ["mean", "sum"])
    def test_batched_equals_stacked(self, graph_pair, mode):
        batch = batch_graphs(graph_pair)
        pooled = readout(batch, batch.graph.node_features(), mode).data
        stacked = np.concatenate([readout(g, g.node_features(), mode).data for g in graph_pair])
        np.testing.assert_allclose(pooled, stacked, atol=1e-12)

    def test_unknown_mode(self, path3):
        with pytest.raises(ConfigError):
            readout(path3, path3.node_features(), "max")

"""
Message-passing layers with an optional differential-encoding branch.

Every layer splits its aggregate into the neighbour messages and the node's
own (self) message, then computes

    out_u = Update( Σ_{v∈N(u)} m_{v→u} + m_{u→u}
                    + [use_diff] diff_enc( Σ_{v∈N(u)} m_{v→u} − m_{u→u} ) )

Message forms
-------------
  gcn       m_{v→u} = H[v]W / sqrt((d_u+1)(d_v+1))   m_{u→u} = H[u]W / (d_u+1)
            Update = ReLU
  gat       scores LeakyReLU(aᵀ[W h_u ‖ W h_v]) softmaxed over N(u) ∪ {u}
            m_{v→u} = α_uv W h_v, m_{u→u} = α_uu W h_u; heads concatenated
            Update = identity
  gatedgcn  ê = e + ReLU(BN(A h_u + B h_v + C e))
            η_uv = σ(ê_uv) / (Σ_{v'} σ(ê_uv') + 1e-6)
            m_{v→u} = η_uv ⊙ V h_v, m_{u→u} = U h_u
            Update(x) = h_u + ReLU(BN(x)); also returns the new edge embeddings

Edge embeddings are threaded through every layer as `E` (one row per stored
directed edge); only GatedGCN reads or changes them.
"""

from __future__ import annotations

import logging

import numpy as np

from engine.functional import (
    concat_cols,
    gather_rows,
    scale_rows,
    segment_softmax,
    segment_sum,
)
from engine.tensor import Tensor, add_scalar, leaky_relu, parameter, relu, reshape, sigmoid
from errors import ConfigError, ContractError, DimensionError
from graphs.aggregate import gcn_coefficients, neighbor_sum
from graphs.containers import Batch, Graph
from layers.ffn import FFN, diff_enc
from layers.module import BatchNorm, Module, glorot

logger = logging.getLogger(__name__)

GATED_EPS = 1e-6


def _graph_of(g: Graph | Batch) -> Graph:
    return g.graph if isinstance(g, Batch) else g


def _check_input(graph: Graph, H: Tensor, d: int) -> None:
    if H.ndim != 2 or H.shape != (graph.num_nodes, d):
        raise DimensionError(f"expected node embeddings ({graph.num_nodes}, {d}), got {H.shape}")


class MPNNLayer(Module):
    """Shared plumbing: diff switch and the two-term aggregate."""

    kind = ""
    width = 0
    diff_enc: FFN | None = None

    def _use_diff(self, use_diff: bool | None) -> bool:
        if use_diff is None:
            return self.diff_enc is not None
        if use_diff and self.diff_enc is None:
            raise ConfigError(f"{self.kind} layer was built without a differential encoder")
        return use_diff

    def aggregate(self, nb: Tensor, own: Tensor, use_diff: bool) -> Tensor:
        agg = nb + own
        if use_diff:
            agg = agg + diff_enc(nb - own, self.diff_enc)
        return agg


# ── GCN ───────────────────────────────────────────────────────────────────────

class GCNLayer(MPNNLayer):
    kind = "gcn"

    def __init__(self, d: int, rng: np.random.Generator, use_diff: bool = False):
        self.width = d
        self.W = parameter(glorot(rng, d, d))
        self.diff_enc = FFN(d, d, rng) if use_diff else None

    def messages(self, graph: Graph, H: Tensor) -> tuple[Tensor, Tensor]:
        HW = H @ self.W
        root_inv, inv = gcn_coefficients(graph)
        nb = scale_rows(neighbor_sum(graph, scale_rows(HW, root_inv)), root_inv)
        return nb, scale_rows(HW, inv)

    def forward(self, g, H: Tensor, E: Tensor | None = None, use_diff: bool | None = None):
        graph = _graph_of(g)
        _check_input(graph, H, self.width)
        nb, own = self.messages(graph, H)
        return relu(self.aggregate(nb, own, self._use_diff(use_diff))), E


# ── GAT ───────────────────────────────────────────────────────────────────────

class GATHead(Module):
    def __init__(self, d: int, d_head: int, rng: np.random.Generator):
        self.W = parameter(glorot(rng, d, d_head))
        self.a = parameter(glorot(rng, 2 * d_head, 1).reshape(-1))


class GATLayer(MPNNLayer):
    kind = "gat"

    def __init__(self, d: int, rng: np.random.Generator, use_diff: bool = False, heads: int = 1):
        if heads < 1 or d % heads:
            raise ConfigError(f"GAT width {d} is not divisible by {heads} heads")
        self.width = d
        self.heads = [GATHead(d, d // heads, rng) for _ in range(heads)]
        self.diff_enc = FFN(d, d, rng) if use_diff else None

    def messages(self, graph: Graph, H: Tensor) -> tuple[Tensor, Tensor]:
        n, k = graph.num_nodes, graph.num_edges
        rows, cols = graph.rows, graph.columns
        # neighbour edges first, then one self edge per node
        dst = np.concatenate([rows, np.arange(n)])
        src = np.concatenate([cols, np.arange(n)])
        nb_parts, own_parts = [], []
        for head in self.heads:
            dh = head.W.shape[1]
            Wh = H @ head.W
            a_dst = reshape(gather_rows(head.a, np.arange(dh)), (dh, 1))
            a_src = reshape(gather_rows(head.a, np.arange(dh, 2 * dh)), (dh, 1))
            s_dst = reshape(Wh @ a_dst, (n,))
            s_src = reshape(Wh @ a_src, (n,))
            scores = leaky_relu(gather_rows(s_dst, dst) + gather_rows(s_src, src))
            alpha = segment_softmax(scores, dst, n)
            alpha_nb = gather_rows(alpha, np.arange(k))
            alpha_self = gather_rows(alpha, np.arange(k, k + n))
            nb_parts.append(segment_sum(scale_rows(gather_rows(Wh, cols), alpha_nb), rows, n))
            own_parts.append(scale_rows(Wh, alpha_self))
        if len(self.heads) == 1:
            return nb_parts[0], own_parts[0]
        return concat_cols(nb_parts), concat_cols(own_parts)

    def forward(self, g, H: Tensor, E: Tensor | None = None, use_diff: bool | None = None):
        graph = _graph_of(g)
        _check_input(graph, H, self.width)
        nb, own = self.messages(graph, H)
        return self.aggregate(nb, own, self._use_diff(use_diff)), E


# ── GatedGCN ──────────────────────────────────────────────────────────────────

class GatedGCNLayer(MPNNLayer):
    kind = "gatedgcn"

    def __init__(self, d: int, rng: np.random.Generator, use_diff: bool = False):
        self.width = d
        self.U = parameter(glorot(rng, d, d))
        self.V = parameter(glorot(rng, d, d))
        self.A = parameter(glorot(rng, d, d))
        self.B = parameter(glorot(rng, d, d))
        self.C = parameter(glorot(rng, d, d))
        self.bn_node = BatchNorm(d)
        self.bn_edge = BatchNorm(d)
        self.diff_enc = FFN(d, d, rng) if use_diff else None

    def forward(self, g, H: Tensor, E: Tensor | None = None, use_diff: bool | None = None):
        graph = _graph_of(g)
        _check_input(graph, H, self.width)
        if E is None:
            raise ContractError("GatedGCN needs edge embeddings")
        if E.shape != (graph.num_edges, self.width):
            raise DimensionError(
                f"edge embeddings have shape {E.shape}, expected ({graph.num_edges}, {self.width})"
            )
        n = graph.num_nodes
        rows, cols = graph.rows, graph.columns

        pre = gather_rows(H @ self.A, rows) + gather_rows(H @ self.B, cols) + E @ self.C
        e_hat = E + relu(self.bn_edge(pre))
        sig = sigmoid(e_hat)
        denom = add_scalar(gather_rows(segment_sum(sig, rows, n), rows), GATED_EPS)
        eta = sig / denom

        nb = segment_sum(eta * gather_rows(H @ self.V, cols), rows, n)
        own = H @ self.U
        x = self.aggregate(nb, own, self._use_diff(use_diff))
        return H + relu(self.bn_node(x)), e_hat


MPNN_KINDS: dict[str, type[MPNNLayer]] = {
    "gcn": GCNLayer,
    "gat": GATLayer,
    "gatedgcn": GatedGCNLayer,
}


def build_mpnn(kind: str, d: int, rng: np.random.Generator, use_diff: bool, gat_heads: int = 1) -> MPNNLayer:
    if kind not in MPNN_KINDS:
        raise ConfigError(f"unknown mpnn kind {kind!r}; expected one of {list(MPNN_KINDS)}")
    if kind == "gat":
        return GATLayer(d, rng, use_diff, heads=gat_heads)
    return MPNN_KINDS[kind](d, rng, use_diff)


def mpnn_forward(kind: str, g, H: Tensor, p: MPNNLayer, use_diff: bool,
                 E: Tensor | None = None) -> tuple[Tensor, Tensor | None]:
    """Run layer `p` of the given kind; returns (node embeddings, edge embeddings)."""
    if p.kind != kind:
        raise ConfigError(f"parameters belong to a {p.kind!r} layer, not {kind!r}")
    return p(g, H, E=E, use_diff=use_diff)

"""
GraphModel: input projection, K hybrid encoder blocks and a task head.

    H₀ = X W_in + b_in
    H_k, E_k = block_k(H_{k-1}, E_{k-1})          k = 1 … K
    graph-class / multi-label   logits = readout(H_K) W_head + b_head
    node-class                  logits = H_K W_head + b_head
    link-pred                   score(u, v) = ⟨H_K[u] W_link, H_K[v] W_link⟩

For GatedGCN the edge embeddings E₀ are a linear projection of the edge
features, or of a constant 1-column when the data has none.

Usage
-----
    from model.model_config import ModelConfig
    from model.network import GraphModel, model_forward

    model = GraphModel(ModelConfig(input_dim=1, hidden=16, heads=4))
    preds = model_forward(model, batch_graphs(graphs))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from engine.functional import gather_rows
from engine.tensor import Tensor, constant, reshape
from errors import ConfigError, ValidationError
from graphs.containers import Batch, Graph, as_batch
from layers.attention import MultiHeadAttention
from layers.block import EncoderBlock
from layers.ffn import FFN
from layers.module import Linear, Module
from layers.mpnn import build_mpnn
from layers.readout import readout
from model.model_config import ModelConfig

logger = logging.getLogger(__name__)


@dataclass
class Predictions:
    logits: Tensor                      # (G, C), (n, C), (G, L) or (P,) link scores
    node_embeddings: Tensor             # final H, one row per batch node
    graph_embeddings: Tensor | None     # readout rows for graph-level tasks
    link_embeddings: Tensor | None = None
    pairs: np.ndarray | None = None     # (P, 3) pairs scored by the link head


def check_compatible(cfg: ModelConfig, graph: Graph) -> None:
    """Raise ConfigError naming the first field the data disagrees with."""
    if graph.feature_dim != cfg.input_dim:
        raise ConfigError(f"input_dim: model expects {cfg.input_dim} features, data has {graph.feature_dim}")
    uses_edges = cfg.use_local and cfg.mpnn_kind == "gatedgcn" and cfg.edge_dim
    if uses_edges and graph.edge_dim != cfg.edge_dim:
        raise ConfigError(f"edge_dim: model expects {cfg.edge_dim} edge features, data has {graph.edge_dim}")
    if graph.label_kind is not None and graph.label_kind != cfg.label_kind:
        raise ConfigError(f"task: model {cfg.task!r} needs {cfg.label_kind!r} labels, data has {graph.label_kind!r}")


class GraphModel(Module):
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.hidden

        self.input_proj = Linear(cfg.input_dim, d, rng)
        self.edge_proj = None
        if cfg.use_local and cfg.mpnn_kind == "gatedgcn":
            self.edge_proj = Linear(max(cfg.edge_dim, 1), d, rng)

        self.blocks = []
        for _ in range(cfg.num_layers):
            mpnn = build_mpnn(cfg.mpnn_kind, d, rng, cfg.diff_local, cfg.gat_heads) if cfg.use_local else None
            mha = MultiHeadAttention(d, cfg.heads, rng, cfg.diff_global) if cfg.use_global else None
            self.blocks.append(EncoderBlock(d, rng, mpnn, mha, cfg.ffn_ratio))

        if cfg.task == "link-pred":
            self.link_map = Linear(d, d, rng, bias=False)
        else:
            self.head = Linear(d, cfg.num_classes, rng)

    # ── pieces ───────────────────────────────────────────────────────────────
    def diff_encoders(self) -> list[FFN]:
        return [m.diff_enc for m in self.modules() if getattr(m, "diff_enc", None) is not None]

    def check_inputs(self, graph: Graph) -> None:
        check_compatible(self.config, graph)

    def edge_inputs(self, graph: Graph) -> Tensor | None:
        if self.edge_proj is None:
            return None
        if self.config.edge_dim:
            attr = graph.directed_edge_attr()
        else:
            attr = np.ones((graph.num_edges, 1))
        return self.edge_proj(constant(attr))

    def encode(self, g: Graph | Batch) -> tuple[Batch, Tensor]:
        batch = as_batch(g)
        self.check_inputs(batch.graph)
        H = self.input_proj(batch.graph.node_features())
        E = self.edge_inputs(batch.graph)
        for block in self.blocks:
            H, E = block(batch, H, E)
        return batch, H

    def forward(self, g: Graph | Batch) -> Predictions:
        batch, H = self.encode(g)
        task = self.config.task
        if task in ("graph-class", "multi-label"):
            pooled = readout(batch, H, self.config.readout)
            return Predictions(self.head(pooled), H, pooled)
        if task == "node-class":
            return Predictions(self.head(H), H, None)
        Z = self.link_map(H)
        pairs = batch.y if batch.label_kind == "pairs" else np.zeros((0, 3), dtype=np.int64)
        return Predictions(pair_scores(Z, pairs), H, None, Z, pairs)


# ── link head ─────────────────────────────────────────────────────────────────

def _check_pairs(pairs: np.ndarray, n: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] not in (2, 3):
        raise ValidationError(f"pairs must be (P, 2) or (P, 3), got shape {pairs.shape}")
    ends = pairs[:, :2]
    bad = ends[(ends < 0) | (ends >= n)]
    if bad.size:
        raise ValidationError(f"pair index {int(bad[0])} out of range for {n} nodes")
    return ends


def pair_scores(Z: Tensor, pairs: np.ndarray) -> Tensor:
    """score_i = ⟨Z[u_i], Z[v_i]⟩ for every pair."""
    ends = _check_pairs(pairs, Z.shape[0])
    if not len(ends):
        return Tensor(np.zeros(0))
    prod = gather_rows(Z, ends[:, 0]) * gather_rows(Z, ends[:, 1])
    ones = constant(np.ones((Z.shape[1], 1)))
    return reshape(prod @ ones, (len(ends),))


def link_score(model: GraphModel, batch: Graph | Batch, pairs: np.ndarray) -> Tensor:
    if model.config.task != "link-pred":
        raise ConfigError(f"link_score needs a link-pred model, got task {model.config.task!r}")
    b = as_batch(batch)
    _check_pairs(pairs, b.num_nodes)
    _, H = model.encode(b)
    return pair_scores(model.link_map(H), pairs)


def model_forward(model: GraphModel, batch: Graph | Batch) -> Predictions:
    return model(batch)


# ── closed-form size ──────────────────────────────────────────────────────────

def parameter_count(cfg: ModelConfig) -> int:
    """Number of trainable scalars `GraphModel(cfg)` owns."""
    cfg.validate()
    d, h = cfg.hidden, cfg.heads
    dh = d // h
    ffn = lambda width, hidden: 2 * width * hidden + hidden + width  # noqa: E731

    total = cfg.input_dim * d + d
    if cfg.use_local and cfg.mpnn_kind == "gatedgcn":
        total += max(cfg.edge_dim, 1) * d + d

    per_block = ffn(d, cfg.ffn_ratio * d)
    if cfg.use_local:
        if cfg.mpnn_kind == "gcn":
            local = d * d
        elif cfg.mpnn_kind == "gat":
            local = d * d + 2 * d          # per head d·(d/g) + 2·(d/g)
        else:
            local = 5 * d * d + 4 * d      # U, V, A, B, C + two batchnorms
        if cfg.use_diff_local:
            local += ffn(d, d)
        per_block += local + 2 * d
    if cfg.use_global:
        glob = 3 * d * d + d * d
        if cfg.use_diff_global:
            glob += h * ffn(dh, dh)
        per_block += glob + 2 * d
    total += cfg.num_layers * per_block

    if cfg.task == "link-pred":
        total += d * d
    else:
        total += d * cfg.num_classes + cfg.num_classes
    return total

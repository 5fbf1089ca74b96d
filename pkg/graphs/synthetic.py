"""
Deterministic synthetic datasets: desk-scale stand-ins for benchmark data.

Kinds
-----
  sbm-node       Stochastic-block-model graphs for node classification.
                 Node label = block id; features = one-hot block indicator
                 plus Gaussian noise.
  cycle-vs-path  Graph classification that only structure can solve:
                 class 0 = n-cycle, class 1 = n-path, constant features.
                 Classes alternate, so any even count is balanced.
  pair-contact   Link prediction on random geometric graphs.  Positive pairs
                 lie within `contact` spatial distance but are at least
                 `min_hops` hops apart; one negative per positive is drawn
                 uniformly from the remaining far, non-adjacent pairs.

Every kind derives all randomness from `numpy.random.default_rng(seed)`;
networkx generators receive integer seeds drawn from that stream, so the
same seed always yields the same dataset.

Usage
-----
    from graphs.synthetic import gen_synthetic
    graphs = gen_synthetic("cycle-vs-path", seed=7, n=6, count=64)
"""

from __future__ import annotations

import inspect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import networkx as nx
import numpy as np

from errors import UsageError, ValidationError
from graphs.containers import Graph

logger = logging.getLogger(__name__)


@dataclass
class SyntheticDataset:
    kind: str
    seed: int
    graphs: list[Graph]
    stats: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return int(self.stats.get("num_classes", 0))


def _nx_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def _edge_array(nxg: nx.Graph) -> np.ndarray:
    pairs = sorted((min(a, b), max(a, b)) for a, b in nxg.edges() if a != b)
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


# ── sbm-node ──────────────────────────────────────────────────────────────────

def _sbm_node(rng, count: int = 16, blocks: int = 2, block_size: int = 20,
              p_in: float = 0.9, p_out: float = 0.05, noise: float = 1.0) -> SyntheticDataset:
    if blocks < 1 or block_size < 1 or count < 1:
        raise ValidationError("sbm-node needs count, blocks and block_size >= 1")
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise ValidationError("sbm-node probabilities must lie in [0, 1]")
    sizes = [block_size] * blocks
    probs = np.full((blocks, blocks), p_out)
    np.fill_diagonal(probs, p_in)
    block_of = np.repeat(np.arange(blocks), block_size)
    n = blocks * block_size

    graphs, intra = [], 0
    for _ in range(count):
        nxg = nx.stochastic_block_model(sizes, probs.tolist(), seed=_nx_seed(rng))
        pairs = _edge_array(nxg)
        if len(pairs):
            intra += int(np.sum(block_of[pairs[:, 0]] == block_of[pairs[:, 1]]))
        x = np.eye(blocks)[block_of] + noise * rng.standard_normal((n, blocks))
        graphs.append(Graph(n, pairs, x, None, "node", block_of))

    trials = count * blocks * math.comb(block_size, 2)
    expected = trials * p_in
    std = math.sqrt(trials * p_in * (1.0 - p_in))
    stats = {
        "num_classes": blocks,
        "intra_edges": intra,
        "intra_expected": expected,
        "intra_std": std,
        "intra_within_3sigma": abs(intra - expected) <= 3.0 * std + 1e-9,
    }
    if not stats["intra_within_3sigma"]:
        logger.warning("SBM intra-block tally %d outside 3 sigma of %.1f", intra, expected)
    return SyntheticDataset("sbm-node", 0, graphs, stats)


# ── cycle-vs-path ─────────────────────────────────────────────────────────────

def _cycle_vs_path(rng, n: int = 6, count: int = 64) -> SyntheticDataset:
    if n < 3:
        raise ValidationError("cycle-vs-path needs n >= 3")
    graphs = []
    for i in range(count):
        label = i % 2
        base = nx.path_graph(n) if label else nx.cycle_graph(n)
        perm = rng.permutation(n)
        pairs = _edge_array(nx.relabel_nodes(base, {u: int(perm[u]) for u in range(n)}))
        graphs.append(Graph(n, pairs, np.ones((n, 1)), None, "graph", label))
    stats = {"num_classes": 2, "class_counts": [(count + 1) // 2, count // 2]}
    return SyntheticDataset("cycle-vs-path", 0, graphs, stats)


# ── pair-contact ──────────────────────────────────────────────────────────────

def _contact_pairs(rng, nxg: nx.Graph, pos: np.ndarray, contact: float, min_hops: int) -> np.ndarray:
    n = len(pos)
    hops = dict(nx.all_pairs_shortest_path_length(nxg))
    far, positives = [], []
    for u in range(n):
        for v in range(u + 1, n):
            d = hops[u].get(v, math.inf)
            if d < min_hops:
                continue
            if np.linalg.norm(pos[u] - pos[v]) <= contact:
                positives.append((u, v))
            else:
                far.append((u, v))
    if not positives:
        return np.zeros((0, 3), dtype=np.int64)
    take = min(len(positives), len(far))
    chosen = rng.choice(len(far), size=take, replace=False) if take else np.zeros(0, np.int64)
    negatives = [far[i] for i in sorted(chosen.tolist())]
    rows = [(u, v, 1) for u, v in positives] + [(u, v, 0) for u, v in negatives]
    return np.array(rows, dtype=np.int64)


def _pair_contact(rng, count: int = 32, nodes: int = 24, radius: float = 0.3,
                  contact: float = 0.45, min_hops: int = 3, noise: float = 0.05,
                  max_attempts: int = 50) -> SyntheticDataset:
    if nodes < 2:
        raise ValidationError("pair-contact needs at least 2 nodes")
    graphs, positives = [], 0
    for _ in range(count):
        for _attempt in range(max_attempts):
            nxg = nx.random_geometric_graph(nodes, radius, seed=_nx_seed(rng))
            pos = np.array([nxg.nodes[u]["pos"] for u in range(nodes)], dtype=np.float64)
            pairs = _contact_pairs(rng, nxg, pos, contact, min_hops)
            if len(pairs):
                break
        x = pos + noise * rng.standard_normal(pos.shape)
        graphs.append(Graph(nodes, _edge_array(nxg), x, None, "pairs", pairs))
        positives += int(pairs[:, 2].sum()) if len(pairs) else 0
    stats = {"num_classes": 1, "positive_pairs": positives}
    return SyntheticDataset("pair-contact", 0, graphs, stats)


# ── unlabelled random graphs (property checks) ────────────────────────────────

def random_graph(rng: np.random.Generator, n: int, edge_prob: float = 0.4, feat_dim: int = 3,
                 edge_dim: int = 0) -> Graph:
    """Erdős–Rényi graph with Gaussian node (and optional edge) features."""
    nxg = nx.gnp_random_graph(n, edge_prob, seed=_nx_seed(rng))
    pairs = _edge_array(nxg)
    x = rng.standard_normal((n, feat_dim))
    attr = rng.standard_normal((len(pairs), edge_dim)) if edge_dim else None
    return Graph(n, pairs, x, attr)


GENERATORS: dict[str, Callable[..., SyntheticDataset]] = {
    "sbm-node": _sbm_node,
    "cycle-vs-path": _cycle_vs_path,
    "pair-contact": _pair_contact,
}


def check_kind(kind: str) -> None:
    if kind not in GENERATORS:
        raise UsageError(f"unknown dataset kind {kind!r}; valid kinds: {', '.join(GENERATORS)}")


def generate(kind: str, seed: int, **sizes) -> SyntheticDataset:
    """Generate a dataset plus generator statistics (class counts, SBM tally)."""
    check_kind(kind)
    gen = GENERATORS[kind]
    rng = np.random.default_rng(seed)
    params = {k: v for k, v in sizes.items() if v is not None}
    try:
        inspect.signature(gen).bind(rng, **params)
    except TypeError as exc:
        raise UsageError(f"{kind}: {exc}") from None
    ds = gen(rng, **params)
    ds.seed = seed
    logger.info("Generated %d %s graphs (seed %d)", len(ds.graphs), kind, seed)
    return ds


def gen_synthetic(kind: str, seed: int, **sizes) -> list[Graph]:
    return generate(kind, seed, **sizes).graphs

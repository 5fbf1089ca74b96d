"""
Graph and Batch containers.

A `Graph` is built from an undirected edge list and keeps it verbatim
(`edge_pairs`) so datasets round-trip exactly.  Every undirected pair is also
stored in both directions as CSR adjacency:

    offsets  (n + 1,)  row u owns columns[offsets[u]:offsets[u + 1]]
    columns  (2k,)     neighbour ids, sorted within each row
    rows     (2k,)     receiving node of each directed edge (CSR row id)
    pair_index (2k,)   which undirected pair each directed edge came from

Self-loops are rejected: layers add the self contribution explicitly.
Both containers are read-only after construction.

A `Batch` is the disjoint union of several graphs.  Node ranges stay
contiguous, so `graph_index` is sorted and `graph_offsets[i]` is the first
node of graph i.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from engine.tensor import Tensor
from errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

# label_kind -> what `y` holds
LABEL_KINDS: dict[str, str] = {
    "graph": "one class id per graph",
    "multilabel": "one 0/1 vector per graph",
    "node": "one class id per node",
    "pairs": "rows of (u, v, label) node pairs",
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edge_pairs: np.ndarray
    x: np.ndarray
    edge_attr: np.ndarray | None = None
    label_kind: str | None = None
    y: np.ndarray | None = None

    offsets: np.ndarray = field(init=False, repr=False)
    columns: np.ndarray = field(init=False, repr=False)
    rows: np.ndarray = field(init=False, repr=False)
    pair_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 0:
            raise ValidationError(f"num_nodes must be >= 0, got {n}")
        pairs = np.array(self.edge_pairs, dtype=np.int64).reshape(-1, 2)
        x = np.array(self.x, dtype=np.float64)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, 0)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValidationError(f"x has shape {x.shape}, expected ({n}, d) rows")

        if len(pairs):
            outside = (pairs < 0) | (pairs >= n)
            bad = np.flatnonzero(outside.any(axis=1))
            if bad.size:
                i = int(bad[0])
                node = int(pairs[i][outside[i]][0])
                raise ValidationError(f"edge {i} references node {node} but graph has {n} nodes")
            loops = np.flatnonzero(pairs[:, 0] == pairs[:, 1])
            if loops.size:
                i = int(loops[0])
                raise ValidationError(f"edge {i} is a self-loop on node {int(pairs[i, 0])}")
            canon = np.sort(pairs, axis=1)
            if len(np.unique(canon, axis=0)) != len(canon):
                raise ValidationError("duplicate undirected edge in edge list")

        attr = None
        if self.edge_attr is not None:
            attr = np.array(self.edge_attr, dtype=np.float64)
            if attr.ndim == 1 and attr.size == 0:
                attr = attr.reshape(0, 0)
            if attr.ndim != 2 or attr.shape[0] != len(pairs):
                raise ValidationError(
                    f"edge_attr has shape {attr.shape}, expected {len(pairs)} rows"
                )

        y = self._check_labels(n, len(pairs))

        k = len(pairs)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        pid = np.concatenate([np.arange(k), np.arange(k)]).astype(np.int64)
        order = np.lexsort((cols, rows))
        rows, cols, pid = rows[order], cols[order], pid[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])

        set_ = object.__setattr__
        set_(self, "num_nodes", n)
        set_(self, "edge_pairs", _frozen(pairs))
        set_(self, "x", _frozen(x))
        set_(self, "edge_attr", None if attr is None else _frozen(attr))
        set_(self, "y", None if y is None else _frozen(y))
        set_(self, "offsets", _frozen(offsets))
        set_(self, "columns", _frozen(cols))
        set_(self, "rows", _frozen(rows))
        set_(self, "pair_index", _frozen(pid))

    def _check_labels(self, n: int, k: int) -> np.ndarray | None:
        kind = self.label_kind
        if kind is None:
            if self.y is not None:
                raise ValidationError("labels given without a label_kind")
            return None
        if kind not in LABEL_KINDS:
            raise ValidationError(f"unknown label kind {kind!r}; expected one of {list(LABEL_KINDS)}")
        y = np.array(self.y, dtype=np.int64)
        if kind == "graph" and y.shape != ():
            raise ValidationError(f"graph label must be a single int, got shape {y.shape}")
        if kind == "multilabel" and (y.ndim != 1 or np.any((y != 0) & (y != 1))):
            raise ValidationError("multi-label target must be a 0/1 vector")
        if kind == "node" and y.shape != (n,):
            raise ValidationError(f"node labels have shape {y.shape}, expected ({n},)")
        if kind == "pairs":
            y = y.reshape(-1, 3)
            ends = y[:, :2]
            outside = ends[(ends < 0) | (ends >= n)]
            if outside.size:
                raise ValidationError(f"pair references node {int(outside[0])} but graph has {n} nodes")
            if np.any((y[:, 2] != 0) & (y[:, 2] != 1)):
                raise ValidationError("pair labels must be 0 or 1")
        return y

    # ── derived views ─────────────────────────────────────────────────────────
    @property
    def num_edges(self) -> int:
        """Number of stored directed edges (twice the undirected count)."""
        return len(self.columns)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def feature_dim(self) -> int:
        return int(self.x.shape[1])

    @property
    def edge_dim(self) -> int:
        return 0 if self.edge_attr is None else int(self.edge_attr.shape[1])

    def neighbors(self, u: int) -> np.ndarray:
        return self.columns[self.offsets[u]:self.offsets[u + 1]]

    def node_features(self) -> Tensor:
        return Tensor(self.x)

    def directed_edge_attr(self) -> np.ndarray | None:
        """Edge features per stored directed edge (both directions share a row)."""
        if self.edge_attr is None:
            return None
        return self.edge_attr[self.pair_index]

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that old node u becomes perm[u]."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.argsort(perm)
        y = self.y
        if self.label_kind == "node":
            y = self.y[inv]
        elif self.label_kind == "pairs":
            y = self.y.copy()
            y[:, :2] = perm[y[:, :2]]
        return Graph(
            self.num_nodes,
            perm[self.edge_pairs] if len(self.edge_pairs) else self.edge_pairs,
            self.x[inv],
            self.edge_attr,
            self.label_kind,
            y,
        )


@dataclass(frozen=True, eq=False)
class Batch:
    graph: Graph
    graph_index: np.ndarray
    graph_offsets: np.ndarray
    num_graphs: int
    node_counts: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def label_kind(self) -> str | None:
        return self.graph.label_kind

    @property
    def y(self) -> np.ndarray | None:
        return self.graph.y


def batch_graphs(gs: Sequence[Graph]) -> Batch:
    """Merge graphs into one disjoint-union graph with per-node graph ids."""
    gs = list(gs)
    if not gs:
        raise ValidationError("cannot batch an empty list of graphs")
    first = gs[0]
    for i, g in enumerate(gs[1:], start=1):
        if g.feature_dim != first.feature_dim:
            raise FormatError(f"graph {i} has feature width {g.feature_dim}, expected {first.feature_dim}")
        if g.edge_dim != first.edge_dim or (g.edge_attr is None) != (first.edge_attr is None):
            raise FormatError(f"graph {i} has edge feature width {g.edge_dim}, expected {first.edge_dim}")
        if g.label_kind != first.label_kind:
            raise FormatError(f"graph {i} has label kind {g.label_kind!r}, expected {first.label_kind!r}")
        if g.label_kind == "multilabel" and g.y.shape != first.y.shape:
            raise FormatError(f"graph {i} has {g.y.shape[0]} labels, expected {first.y.shape[0]}")

    counts = np.array([g.num_nodes for g in gs], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    pairs = np.concatenate(
        [g.edge_pairs + off for g, off in zip(gs, starts)]
    ).reshape(-1, 2)
    x = np.concatenate([g.x for g in gs], axis=0)
    attr = None
    if first.edge_attr is not None:
        attr = np.concatenate([g.edge_attr for g in gs], axis=0)

    kind = first.label_kind
    y = None
    if kind in ("graph", "multilabel"):
        y = np.stack([g.y for g in gs])
    elif kind == "node":
        y = np.concatenate([g.y for g in gs])
    elif kind == "pairs":
        shifted = []
        for g, off in zip(gs, starts):
            p = g.y.copy()
            p[:, :2] += off
            shifted.append(p)
        y = np.concatenate(shifted).reshape(-1, 3)

    merged = _merged_graph(int(counts.sum()), pairs, x, attr, kind, y)
    graph_index = np.repeat(np.arange(len(gs), dtype=np.int64), counts)
    return Batch(merged, _frozen(graph_index), _frozen(starts), len(gs), _frozen(counts))


def _merged_graph(n, pairs, x, attr, kind, y) -> Graph:
    # graph-level labels of a batch are stacked, which Graph's per-graph check rejects
    if kind in ("graph", "multilabel"):
        g = Graph(n, pairs, x, attr)
        object.__setattr__(g, "label_kind", kind)
        object.__setattr__(g, "y", _frozen(np.asarray(y, dtype=np.int64)))
        return g
    return Graph(n, pairs, x, attr, kind, y)


def as_batch(g: Graph | Batch) -> Batch:
    return g if isinstance(g, Batch) else batch_graphs([g])

"""Permutation-invariant pooling of node embeddings into one row per graph."""

from __future__ import annotations

import numpy as np

from engine.functional import scale_rows, segment_sum
from engine.tensor import Tensor
from errors import ConfigError, DimensionError
from graphs.containers import Batch, Graph, as_batch

READOUT_MODES = ("mean", "sum")


def readout(batch: Graph | Batch, H: Tensor, mode: str = "mean") -> Tensor:
    if mode not in READOUT_MODES:
        raise ConfigError(f"unknown readout mode {mode!r}; expected one of {list(READOUT_MODES)}")
    b = as_batch(batch)
    if H.ndim != 2 or H.shape[0] != b.num_nodes:
        raise DimensionError(f"readout: H has shape {H.shape} for {b.num_nodes} nodes")
    pooled = segment_sum(H, b.graph_index, b.num_graphs)
    if mode == "sum":
        return pooled
    counts = np.maximum(b.node_counts, 1).astype(np.float64)
    return scale_rows(pooled, 1.0 / counts)

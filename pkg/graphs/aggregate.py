"""
Neighbourhood aggregation over CSR adjacency.

`neighbor_sum(g, H)` is the Σ_{v∈N(u)} H[v] term every message-passing layer
builds on.  Its backward rule is the same sum over the reversed adjacency;
because stored graphs are symmetric that is again neighbor_sum, but the rule
is written for directed edges so it never relies on symmetry.
"""

from __future__ import annotations

import numpy as np

from engine.tensor import DTYPE, Tensor, custom_op
from errors import DimensionError
from graphs.containers import Batch, Graph


def neighbor_sum(g: Graph | Batch, H: Tensor) -> Tensor:
    graph = g.graph if isinstance(g, Batch) else g
    if H.ndim != 2 or H.shape[0] != graph.num_nodes:
        raise DimensionError(
            f"neighbor_sum: H has shape {H.shape} but graph has {graph.num_nodes} nodes"
        )
    rows, cols = graph.rows, graph.columns
    out = np.zeros(H.shape, dtype=DTYPE)
    np.add.at(out, rows, H.data[cols])

    def rule(grad):
        dH = np.zeros(H.shape, dtype=DTYPE)
        np.add.at(dH, cols, grad[rows])
        return (dH,)

    return custom_op(out, (H,), rule, "neighbor_sum")


def gcn_coefficients(graph: Graph) -> tuple[np.ndarray, np.ndarray]:
    """
    Symmetric normalisation with an implicit self-loop.

    Returns (1/sqrt(d_u + 1) per node, 1/(d_u + 1) per node).
    """
    deg = graph.degrees.astype(DTYPE) + 1.0
    return 1.0 / np.sqrt(deg), 1.0 / deg

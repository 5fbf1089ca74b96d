"""
JSON-lines dataset files: one graph per line.

Line format
-----------
    {"num_nodes": 3,
     "edges": [[0, 1], [1, 2]],                 undirected pairs
     "x": [["1.0000000000000000", ...], ...],   node-feature rows
     "edge_attr": [[...], ...],                 optional, one row per pair
     "y_graph": 1}                              exactly one label key

Label keys: `y_graph` (int, or a 0/1 list for multi-label graphs), `y_node`
(int list) or `y_pairs` (list of [u, v, label]).  Floats are written as
decimal strings with 17 significant digits, which round-trips every float64
exactly.  Plain JSON numbers are accepted on load for hand-written fixtures.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Iterable

import numpy as np

from errors import FormatError, ParseError, ValidationError
from graphs.containers import Graph

logger = logging.getLogger(__name__)

_LABEL_KEYS = ("y_graph", "y_node", "y_pairs")
_KNOWN_KEYS = {"num_nodes", "edges", "x", "edge_attr", *_LABEL_KEYS}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _float_rows(rows: np.ndarray) -> list[list[str]]:
    return [[_fmt(v) for v in row] for row in rows]


def graph_to_record(g: Graph) -> dict:
    rec: dict = {
        "num_nodes": g.num_nodes,
        "edges": g.edge_pairs.tolist(),
        "x": _float_rows(g.x),
    }
    if g.edge_attr is not None:
        rec["edge_attr"] = _float_rows(g.edge_attr)
    if g.label_kind == "graph":
        rec["y_graph"] = int(g.y)
    elif g.label_kind == "multilabel":
        rec["y_graph"] = g.y.tolist()
    elif g.label_kind == "node":
        rec["y_node"] = g.y.tolist()
    elif g.label_kind == "pairs":
        rec["y_pairs"] = g.y.tolist()
    else:
        raise FormatError("cannot save an unlabelled graph")
    return rec


def save_dataset(gs: Iterable[Graph], path: str) -> int:
    """Write graphs to `path`; returns the number of lines written."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in gs:
            fh.write(json.dumps(graph_to_record(g), separators=(",", ":")))
            fh.write("\n")
            count += 1
    logger.info("Saved %d graphs to %s", count, path)
    return count


# ── Loading ───────────────────────────────────────────────────────────────────

def _float_matrix(raw, key: str, line: int) -> np.ndarray:
    if not isinstance(raw, list) or any(not isinstance(r, list) for r in raw):
        raise ParseError(f"{key!r} must be a list of rows", line)
    widths = {len(r) for r in raw}
    if len(widths) > 1:
        raise ParseError(f"{key!r} rows have differing widths {sorted(widths)}", line)
    try:
        values = [[float(v) for v in r] for r in raw]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{key!r} holds a non-numeric value: {exc}", line) from None
    width = widths.pop() if widths else 0
    return np.array(values, dtype=np.float64).reshape(len(raw), width)


def _int_array(raw, key: str, line: int) -> np.ndarray:
    flat = np.array(raw, dtype=object).reshape(-1)
    if any(isinstance(v, bool) or not isinstance(v, int) for v in flat):
        raise ParseError(f"{key!r} must hold integers", line)
    try:
        return np.array(raw, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{key!r} is not a regular integer array: {exc}", line) from None


def _int_rows(raw, key: str, width: int, line: int) -> np.ndarray:
    """Integer table of shape (rows, width); an empty list is zero rows."""
    if not isinstance(raw, list):
        raise ParseError(f"{key!r} must be a list of rows", line)
    if not raw:
        return np.zeros((0, width), np.int64)
    if any(not isinstance(r, list) or len(r) != width for r in raw):
        raise ParseError(f"{key!r} rows must each hold {width} integers", line)
    return _int_array(raw, key, line)


def record_to_graph(rec: dict, line: int) -> Graph:
    if not isinstance(rec, dict):
        raise ParseError("expected a JSON object", line)
    unknown = set(rec) - _KNOWN_KEYS
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}", line)
    for key in ("num_nodes", "edges", "x"):
        if key not in rec:
            raise ParseError(f"missing key {key!r}", line)
    labels = [k for k in _LABEL_KEYS if k in rec]
    if len(labels) != 1:
        raise ParseError(f"expected exactly one of {list(_LABEL_KEYS)}, found {labels}", line)

    n = rec["num_nodes"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError("'num_nodes' must be an integer", line)
    edges = _int_rows(rec["edges"], "edges", 2, line)
    x = _float_matrix(rec["x"], "x", line)
    attr = _float_matrix(rec["edge_attr"], "edge_attr", line) if "edge_attr" in rec else None

    key = labels[0]
    raw = rec[key]
    if key == "y_graph":
        kind = "multilabel" if isinstance(raw, list) else "graph"
    else:
        kind = "node" if key == "y_node" else "pairs"
    if kind == "pairs":
        y = _int_rows(raw, key, 3, line)
    else:
        y = _int_array(raw, key, line)

    try:
        return Graph(n, edges, x, attr, kind, y)
    except ValidationError as exc:
        raise ValidationError(f"line {line}: {exc}") from None


def load_dataset(path: str) -> list[Graph]:
    graphs: list[Graph] = []
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(f"not valid UTF-8: {exc.reason}", line_no) from None
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line_no) from None
            graphs.append(record_to_graph(rec, line_no))
    logger.info("Loaded %d graphs from %s", len(graphs), path)
    return graphs

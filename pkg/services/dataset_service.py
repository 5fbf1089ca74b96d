"""
Dataset service: `app.py gen`.

Wraps the synthetic generators and the JSON-lines writer, refusing to
overwrite an existing file unless `force` is set.

Usage
-----
    from services.dataset_service import cmd_gen

    summary = cmd_gen("cycle-vs-path", seed=7, out="data/cvp.jsonl", n=6, count=64)
    print(summary.line())
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from config import Config
from errors import UsageError
from graphs.containers import Graph
from graphs.dataset_io import save_dataset
from graphs.synthetic import check_kind, generate

logger = logging.getLogger(__name__)

# `--n` means a different size knob for each kind
_N_ALIASES = {"cycle-vs-path": "n", "pair-contact": "nodes", "sbm-node": "block_size"}


@dataclass
class GenSummary:
    kind: str
    path: str
    graphs: int
    nodes: int
    classes: int
    class_counts: dict[int, int] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def line(self) -> str:
        counts = "/".join(str(self.class_counts[c]) for c in sorted(self.class_counts))
        text = f"wrote {self.graphs} {self.kind} graphs ({self.nodes} nodes, {self.classes} classes"
        if counts:
            text += f", label counts {counts}"
        return text + f") to {self.path}"


def default_path(kind: str, seed: int) -> str:
    return os.path.join(Config.DATA_DIR, f"{kind}-{seed}.jsonl")


def label_counts(graphs: list[Graph]) -> dict[int, int]:
    counts: Counter = Counter()
    for g in graphs:
        if g.label_kind == "graph":
            counts[int(g.y)] += 1
        elif g.label_kind == "node":
            counts.update(int(v) for v in g.y)
        elif g.label_kind == "pairs":
            counts.update(int(v) for v in g.y[:, 2])
    return dict(counts)


def cmd_gen(kind: str, seed: int = 0, out: str | None = None, force: bool = False,
            n: int | None = None, **sizes) -> GenSummary:
    check_kind(kind)
    path = out or default_path(kind, seed)
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} already exists; pass --force to overwrite it")
    if n is not None:
        sizes[_N_ALIASES.get(kind, "n")] = n

    ds = generate(kind, seed, **sizes)
    save_dataset(ds.graphs, path)
    summary = GenSummary(
        kind=kind,
        path=path,
        graphs=len(ds.graphs),
        nodes=int(np.sum([g.num_nodes for g in ds.graphs])),
        classes=ds.num_classes,
        class_counts=label_counts(ds.graphs),
        stats=ds.stats,
    )
    logger.info(summary.line())
    return summary

"""
Evaluation metrics and the metrics CSV.

Classification (graph-class, node-class)
    accuracy   fraction of argmax predictions equal to the label; ties in
               the logits go to the lowest class index
    macro_f1   unweighted mean of per-class F1 over all `num_classes`
               classes; a class absent from both truth and prediction
               scores 0
Multi-label
    ap         per-label average precision (step sum Σ (Rₙ − Rₙ₋₁) Pₙ),
               averaged over labels that have at least one positive
Link prediction
    mrr, hits@1, hits@3, hits@10 over pessimistic ranks:
    rank = 1 + #(candidates scoring >= the positive)

The set-based metrics come from scikit-learn; ranking is computed here.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.metrics import accuracy_score, average_precision_score, f1_score

from errors import ValidationError

logger = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)
CSV_COLUMNS = ("run_seed", "epoch", "split", "loss", "metric_name", "metric_value")

# metric used to pick the best validation epoch, higher is better
PRIMARY_METRIC = {
    "graph-class": "accuracy",
    "node-class": "accuracy",
    "multi-label": "ap",
    "link-pred": "mrr",
}


# ── Classification ────────────────────────────────────────────────────────────

def predict_classes(logits: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(logits), axis=1)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels).reshape(-1)
    if not len(labels):
        raise ValidationError("accuracy of an empty prediction set")
    return float(accuracy_score(labels, predict_classes(logits)))


def macro_f1(logits: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    labels = np.asarray(labels).reshape(-1)
    if not len(labels):
        raise ValidationError("macro-F1 of an empty prediction set")
    return float(f1_score(
        labels, predict_classes(logits),
        labels=list(range(num_classes)), average="macro", zero_division=0,
    ))


def average_precision(scores: np.ndarray, targets: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if scores.ndim == 1:
        scores, targets = scores[:, None], targets[:, None]
    if scores.shape != targets.shape or not scores.size:
        raise ValidationError(f"average precision: scores {scores.shape} vs targets {targets.shape}")
    per_label = []
    for j in range(scores.shape[1]):
        if not targets[:, j].any():
            logger.warning("Label %d has no positive example; left out of AP", j)
            continue
        per_label.append(average_precision_score(targets[:, j], scores[:, j]))
    if not per_label:
        raise ValidationError("average precision needs at least one label with a positive")
    return float(np.mean(per_label))


# ── Ranking ───────────────────────────────────────────────────────────────────

def pessimistic_rank(positive: float, candidates: np.ndarray) -> int:
    """1-based rank of `positive` when every tie is placed ahead of it."""
    candidates = np.asarray(candidates)
    if not candidates.size:
        raise ValidationError("cannot rank against an empty candidate set")
    return 1 + int(np.count_nonzero(candidates >= positive))


def ranking_metrics(ranks: Sequence[int]) -> dict[str, float]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if not ranks.size:
        raise ValidationError("ranking metrics need a non-empty candidate set")
    out = {"mrr": float(np.mean(1.0 / ranks))}
    for k in HITS_AT:
        out[f"hits@{k}"] = float(np.mean(ranks <= k))
    return out


def filtered_link_ranks(Z: np.ndarray, pairs: np.ndarray, graph_index: np.ndarray) -> np.ndarray:
    """
    Rank every positive pair (u, v) of `pairs` against the other nodes w of
    u's graph that are not themselves positive partners of u.

    Scores are ⟨Z[u], Z[w]⟩; `pairs` rows are (u, v, label) in batch ids.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    positives = pairs[pairs[:, 2] == 1]
    partners: dict[int, set[int]] = {}
    for u, v in positives[:, :2]:
        partners.setdefault(int(u), set()).add(int(v))
        partners.setdefault(int(v), set()).add(int(u))

    ranks = []
    for u, v in positives[:, :2]:
        u, v = int(u), int(v)
        same = np.flatnonzero(graph_index == graph_index[u])
        keep = [w for w in same if w != u and w not in partners[u]]
        if not keep:
            raise ValidationError(f"node {u} has no negative candidates left after filtering")
        ranks.append(pessimistic_rank(float(Z[u] @ Z[v]), Z[keep] @ Z[u]))
    return np.asarray(ranks, dtype=np.int64)


# ── Dispatch ──────────────────────────────────────────────────────────────────

def metrics(kind: str, predictions: np.ndarray, labels: np.ndarray, num_classes: int = 0) -> dict[str, float]:
    """Metric values for one task; `predictions` are logits, or ranks for link-pred."""
    if kind in ("graph-class", "node-class"):
        return {
            "accuracy": accuracy(predictions, labels),
            "macro_f1": macro_f1(predictions, labels, num_classes or np.asarray(predictions).shape[1]),
        }
    if kind == "multi-label":
        return {"ap": average_precision(predictions, labels)}
    if kind == "link-pred":
        return ranking_metrics(predictions)
    raise ValidationError(f"no metrics defined for task {kind!r}")


# ── Records / CSV ─────────────────────────────────────────────────────────────

@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    metrics: dict[str, float] = field(default_factory=dict)
    run_seed: int = 0

    def rows(self) -> list[dict]:
        base = {"run_seed": self.run_seed, "epoch": self.epoch, "split": self.split,
                "loss": format(self.loss, ".17g")}
        if not self.metrics:
            return [{**base, "metric_name": "loss", "metric_value": format(self.loss, ".17g")}]
        return [
            {**base, "metric_name": name, "metric_value": format(value, ".17g")}
            for name, value in sorted(self.metrics.items())
        ]


def write_metrics_csv(records: Iterable[MetricsRecord], path: str, append: bool = False) -> int:
    """Write one row per metric; returns the number of rows written."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fresh = not (append and os.path.exists(path))
    count = 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if fresh:
            writer.writeheader()
        for rec in records:
            for row in rec.rows():
                writer.writerow(row)
                count += 1
    return count


def read_metrics_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

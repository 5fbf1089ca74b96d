"""
Training and evaluation loops.

train_loop
    Seeded shuffling into mini-batches, one AdamW step per batch with the
    warmup-cosine schedule, validation after every epoch, best-validation
    snapshot, test metrics at the best epoch.  With `out_dir` it also writes
    `metrics.csv`, `best.ckpt` and `last.ckpt`.
evaluate
    Eval-mode forward over a dataset in chunks of `batch_size` graphs.  Chunks
    fan out over a thread pool capped by DIFFGRAPH_THREADS and are merged in
    dataset order, so results do not depend on the thread count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from config import Config
from engine.tensor import Tape, backward, no_grad
from errors import TrainingAborted, ValidationError
from graphs.containers import Batch, Graph, batch_graphs
from model.checkpoint import model_tensors, save_checkpoint
from model.network import GraphModel, Predictions
from training.losses import loss as task_loss
from training.metrics import (
    PRIMARY_METRIC,
    MetricsRecord,
    filtered_link_ranks,
    metrics,
    write_metrics_csv,
)
from training.optim import AdamW, OptimizerConfig, clip_grad_norm
from training.schedule import lr_at

logger = logging.getLogger(__name__)


def batch_labels(task: str, preds: Predictions, batch: Batch) -> np.ndarray:
    if task == "link-pred":
        return preds.pairs[:, 2]
    if batch.y is None:
        raise ValidationError("dataset graphs carry no labels")
    return batch.y


def shuffled_batches(graphs: Sequence[Graph], batch_size: int, rng: np.random.Generator) -> list[Batch]:
    order = rng.permutation(len(graphs))
    return [
        batch_graphs([graphs[i] for i in order[start:start + batch_size]])
        for start in range(0, len(graphs), batch_size)
    ]


# ── Evaluation ────────────────────────────────────────────────────────────────

@dataclass
class _ChunkResult:
    outputs: np.ndarray      # logits, or link ranks
    labels: np.ndarray
    loss_sum: float
    count: int


def _eval_chunk(model: GraphModel, chunk: Sequence[Graph]) -> _ChunkResult:
    task = model.config.task
    with no_grad():
        batch = batch_graphs(chunk)
        preds = model(batch)
        labels = batch_labels(task, preds, batch)
        count = labels.size if task in ("multi-label", "link-pred") else len(labels)
        value = task_loss(task, preds.logits, labels).item() if count else 0.0
    if task == "link-pred":
        ranks = filtered_link_ranks(preds.link_embeddings.data, preds.pairs, batch.graph_index)
        return _ChunkResult(ranks, labels, value * count, count)
    return _ChunkResult(preds.logits.data.copy(), labels, value * count, count)


def evaluate(model: GraphModel, graphs: Sequence[Graph], batch_size: int = 32,
             threads: int | None = None, split: str = "eval", epoch: int = 0,
             run_seed: int = 0) -> MetricsRecord:
    if not graphs:
        raise ValidationError(f"cannot evaluate an empty {split} dataset")
    model.eval()
    chunks = [graphs[i:i + batch_size] for i in range(0, len(graphs), batch_size)]
    workers = max(1, min(threads or Config.THREADS, len(chunks)))
    if workers == 1:
        results = [_eval_chunk(model, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _eval_chunk(model, c), chunks))

    task = model.config.task
    count = sum(r.count for r in results)
    mean_loss = sum(r.loss_sum for r in results) / max(count, 1)
    outputs = np.concatenate([r.outputs for r in results], axis=0)
    labels = np.concatenate([r.labels for r in results], axis=0)
    values = metrics(task, outputs, labels, model.config.num_classes)
    return MetricsRecord(epoch, split, float(mean_loss), values, run_seed)


# ── Training ──────────────────────────────────────────────────────────────────

@dataclass
class RunResult:
    records: list[MetricsRecord] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    steps: int = 0
    best_epoch: int = 0
    best_value: float = -math.inf
    test: MetricsRecord | None = None


def _snapshot(model: GraphModel) -> list[np.ndarray]:
    return [arr.copy() for _, arr in model_tensors(model)]


def _restore(model: GraphModel, snap: list[np.ndarray]) -> None:
    for (_, arr), saved in zip(model_tensors(model), snap):
        arr[...] = saved


def train_loop(model: GraphModel, train: Sequence[Graph], val: Sequence[Graph] | None,
               test: Sequence[Graph] | None, cfg: OptimizerConfig, run_seed: int = 0,
               out_dir: str | None = None, threads: int | None = None,
               on_step: Callable[[int, float], None] | None = None) -> RunResult:
    """Train `model` in place; it ends holding the best-validation parameters when `val` is given."""
    if not train:
        raise ValidationError("training set is empty")
    task = model.config.task
    per_epoch = math.ceil(len(train) / cfg.batch_size)
    sched = cfg.with_total_steps(cfg.total_steps or max(cfg.epochs * per_epoch, cfg.warmup_steps))
    optimizer = AdamW(model.named_parameters(), sched)
    params = model.parameters()
    rng = np.random.default_rng(run_seed)
    result = RunResult()
    best_snap = None
    primary = PRIMARY_METRIC[task]

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        epoch_losses = []
        for batch in shuffled_batches(train, cfg.batch_size, rng):
            step = optimizer.step_count + 1
            model.zero_grad()
            with Tape():
                preds = model(batch)
                value = task_loss(task, preds.logits, batch_labels(task, preds, batch))
            current = value.item()
            if not math.isfinite(current):
                raise TrainingAborted(f"loss became {current} at step {step} (epoch {epoch})", step)
            backward(value)
            if sched.clip_norm > 0:
                clip_grad_norm(params, sched.clip_norm)
            optimizer.step(lr_at(step, sched))
            epoch_losses.append(current)
            if on_step is not None:
                on_step(step, current)

        result.losses.extend(epoch_losses)
        train_loss = float(np.mean(epoch_losses))
        result.records.append(MetricsRecord(epoch, "train", train_loss, {}, run_seed))

        if val:
            rec = evaluate(model, val, cfg.batch_size, threads, "val", epoch, run_seed)
            result.records.append(rec)
            if rec.metrics[primary] > result.best_value:
                result.best_value, result.best_epoch = rec.metrics[primary], epoch
                best_snap = _snapshot(model)
                if out_dir:
                    save_checkpoint(model, os.path.join(out_dir, "best.ckpt"),
                                    optimizer.state_dict(), optimizer.step_count)
            logger.info("epoch %d loss %.4f val %s %.4f", epoch, train_loss, primary, rec.metrics[primary])
        else:
            logger.info("epoch %d loss %.4f", epoch, train_loss)

    result.steps = optimizer.step_count
    if out_dir:
        save_checkpoint(model, os.path.join(out_dir, "last.ckpt"), optimizer.state_dict(), optimizer.step_count)
        if best_snap is None:
            save_checkpoint(model, os.path.join(out_dir, "best.ckpt"), optimizer.state_dict(), optimizer.step_count)
    if best_snap is not None:
        _restore(model, best_snap)
    else:
        result.best_epoch = cfg.epochs

    if test:
        result.test = evaluate(model, test, cfg.batch_size, threads, "test", result.best_epoch, run_seed)
        result.records.append(result.test)
        logger.info("test at epoch %d: %s", result.best_epoch, result.test.metrics)
    if out_dir:
        write_metrics_csv(result.records, os.path.join(out_dir, "metrics.csv"))
    return result

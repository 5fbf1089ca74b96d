"""
Evaluator service: `app.py eval`.

Loads a checkpoint, checks it against the dataset and runs the same
eval-mode code path the training loop uses for validation and test, with
the batch size the checkpoint was trained with.
"""

from __future__ import annotations

import logging
import os

from errors import ConfigError, ValidationError
from graphs.dataset_io import load_dataset
from model.checkpoint import load_checkpoint
from model.network import check_compatible
from training.loop import evaluate
from training.metrics import MetricsRecord, write_metrics_csv
from training.optim import OptimizerConfig

logger = logging.getLogger(__name__)


def cmd_eval(checkpoint: str, dataset: str, task: str | None = None, out: str | None = None,
             threads: int | None = None) -> MetricsRecord:
    ckpt = load_checkpoint(checkpoint)
    model = ckpt.model
    if task is not None and task != model.config.task:
        raise ConfigError(f"task: checkpoint holds a {model.config.task!r} model, not {task!r}")
    if not os.path.isfile(dataset):
        raise ConfigError(f"dataset not found: {dataset}")

    graphs = load_dataset(dataset)
    if not graphs:
        raise ValidationError(f"cannot evaluate the empty dataset {dataset}")
    check_compatible(model.config, graphs[0])

    batch_size = OptimizerConfig().batch_size
    if ckpt.optimizer is not None:
        batch_size = int(ckpt.optimizer.get("config", {}).get("batch_size", batch_size))
    record = evaluate(model, graphs, batch_size, threads, split="eval", epoch=0)
    if out:
        write_metrics_csv([record], out, append=True)
    logger.info("Evaluated %s on %d graphs: %s", checkpoint, len(graphs), record.metrics)
    return record

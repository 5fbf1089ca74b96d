"""
Trainer service: `app.py train`.

Resolves the run configuration, loads and checks every dataset before any
training starts, echoes the resolved configuration into the output folder
and runs one training loop per seed.

Output layout
-------------
    <out_dir>/config.resolved.json
    <out_dir>/metrics.csv, best.ckpt, last.ckpt              (one seed)
    <out_dir>/seed-<s>/metrics.csv, best.ckpt, last.ckpt     (several seeds)
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from typing import Sequence

from config import RunConfig, load_run_config
from errors import ConfigError, ValidationError
from graphs.containers import Graph
from graphs.dataset_io import load_dataset
from model.network import GraphModel, check_compatible
from training.loop import RunResult, train_loop

logger = logging.getLogger(__name__)

RESOLVED_NAME = "config.resolved.json"


@dataclass
class SeedRun:
    seed: int
    out_dir: str
    result: RunResult


def read_split(path: str, key: str) -> list[Graph]:
    if not path:
        return []
    if not os.path.isfile(path):
        raise ConfigError(f"{key}: dataset not found: {path}")
    graphs = load_dataset(path)
    if not graphs:
        raise ValidationError(f"{key}: dataset {path} is empty")
    return graphs


def load_splits(run: RunConfig) -> tuple[list[Graph], list[Graph], list[Graph]]:
    train = read_split(run.train, "data.train")
    val = read_split(run.val, "data.val")
    test = read_split(run.test, "data.test")
    for key, graphs in (("data.train", train), ("data.val", val), ("data.test", test)):
        for g in graphs[:1]:
            try:
                check_compatible(run.model, g)
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return train, val, test


def seed_dir(run: RunConfig, seed: int) -> str:
    return run.out_dir if len(run.seeds) == 1 else os.path.join(run.out_dir, f"seed-{seed}")


def train_run(run: RunConfig, splits: Sequence[list[Graph]] | None = None,
              threads: int | None = None) -> list[SeedRun]:
    train, val, test = splits if splits is not None else load_splits(run)
    os.makedirs(run.out_dir, exist_ok=True)
    run.save(os.path.join(run.out_dir, RESOLVED_NAME))

    runs = []
    for seed in run.seeds:
        model = GraphModel(replace(run.model, seed=seed))
        logger.info("Training seed %d: %d parameters, %d train graphs", seed, model.num_parameters(), len(train))
        out = seed_dir(run, seed)
        result = train_loop(model, train, val or None, test or None, run.optim,
                            run_seed=seed, out_dir=out, threads=threads)
        runs.append(SeedRun(seed, out, result))
    return runs


def cmd_train(config_path: str | None, overrides: Sequence[str] = ()) -> list[SeedRun]:
    run = load_run_config(config_path, overrides)
    return train_run(run)

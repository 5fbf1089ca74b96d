"""
Experiment service: `app.py compare`.

Trains the same run configuration as several model variants over every seed
in `run.seeds` and tabulates the test metrics as mean ± standard deviation.

Variants
--------
  baseline            both branches, no differential encoding
  diff-enc            both branches, differential encoding in both
  with --ablation also:
  local-only          message passing only, plain / with differential encoding
  global-only         attention only, plain / with differential encoding

Each variant trains under `<out_dir>/<variant>/`; the table is written to
`<out_dir>/comparison.csv`.
"""

from __future__ import annotations

import copy
import csv
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from config import RunConfig, load_run_config
from services.trainer import load_splits, train_run
from training.metrics import PRIMARY_METRIC

logger = logging.getLogger(__name__)

VARIANTS: list[tuple[str, dict]] = [
    ("baseline", {"use_diff_local": False, "use_diff_global": False}),
    ("diff-enc", {"use_diff_local": True, "use_diff_global": True}),
]
ABLATIONS: list[tuple[str, dict]] = [
    ("local-only", {"use_global": False, "use_diff_local": False}),
    ("local-only+diff", {"use_global": False, "use_diff_local": True}),
    ("global-only", {"use_local": False, "use_diff_global": False}),
    ("global-only+diff", {"use_local": False, "use_diff_global": True}),
]
COMPARISON_COLUMNS = ("variant", "metric", "mean", "std", "seeds", "values")


@dataclass
class VariantResult:
    name: str
    metric: str
    values: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


@dataclass
class Comparison:
    metric: str
    rows: list[VariantResult]
    path: str = ""

    def row(self, name: str) -> VariantResult:
        return next(r for r in self.rows if r.name == name)

    def lines(self) -> list[str]:
        out = [f"{'variant':<18} {self.metric:>10}   (mean ± std over {len(self.rows[0].values)} seeds)"]
        for r in self.rows:
            out.append(f"{r.name:<18} {r.mean:>10.4f} ± {r.std:.4f}")
        return out


def variant_run(run: RunConfig, name: str, changes: dict) -> RunConfig:
    sub = copy.deepcopy(run)
    sub.model = replace(run.model, **changes).validate()
    sub.out_dir = os.path.join(run.out_dir, name)
    return sub


def write_comparison(table: Comparison, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for r in table.rows:
            writer.writerow([
                r.name, r.metric, format(r.mean, ".17g"), format(r.std, ".17g"), len(r.values),
                " ".join(format(v, ".17g") for v in r.values),
            ])


def compare_run(run: RunConfig, ablation: bool = False, threads: int | None = None) -> Comparison:
    splits = load_splits(run)
    metric = PRIMARY_METRIC[run.model.task]
    variants = VARIANTS + (ABLATIONS if ablation else [])

    rows = []
    for name, changes in variants:
        logger.info("Variant %s over seeds %s", name, run.seeds)
        result = VariantResult(name, metric)
        for seed_run in train_run(variant_run(run, name, changes), splits, threads):
            res = seed_run.result
            score = res.test.metrics[metric] if res.test is not None else res.best_value
            result.values.append(float(score))
        rows.append(result)

    table = Comparison(metric, rows)
    os.makedirs(run.out_dir, exist_ok=True)
    table.path = os.path.join(run.out_dir, "comparison.csv")
    write_comparison(table, table.path)
    return table


def cmd_compare(config_path: str | None, overrides: Sequence[str] = (), ablation: bool = False) -> Comparison:
    return compare_run(load_run_config(config_path, overrides), ablation)

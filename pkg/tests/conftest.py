"""
Shared fixtures for the diffgraph test suite.
"""

import json

import numpy as np
import pytest

from config import Config
from graphs.containers import Graph
from graphs.dataset_io import save_dataset
from graphs.synthetic import gen_synthetic, random_graph


# =============================================================================
# Random state
# =============================================================================

@pytest.fixture
def rng():
    """Fresh seeded generator per test."""
    return np.random.default_rng(1234)


# =============================================================================
# Graphs
# =============================================================================

@pytest.fixture
def path3():
    """3-node path 0-1-2 with scalar features [1, 2, 3]."""
    return Graph(3, [[0, 1], [1, 2]], [[1.0], [2.0], [3.0]])


@pytest.fixture
def small_graph(rng):
    """Random 6-node graph with 4 features."""
    return random_graph(rng, 6, 0.5, 4)


@pytest.fixture
def graph_pair(rng):
    """Two random graphs of 5 and 4 nodes sharing a feature width of 4."""
    return [random_graph(rng, 5, 0.5, 4), random_graph(rng, 4, 0.5, 4)]


# =============================================================================
# Workspace isolation
# =============================================================================

@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Point the data and runs folders at a temporary directory."""
    data_dir = tmp_path / "data"
    runs_dir = tmp_path / "runs"
    monkeypatch.setattr(Config, "DATA_DIR", str(data_dir))
    monkeypatch.setattr(Config, "RUNS_DIR", str(runs_dir))
    monkeypatch.setattr(Config, "THREADS", 1)
    return tmp_path


@pytest.fixture
def cvp_files(workspace):
    """Small cycle-vs-path train / val / test files; returns their paths."""
    paths = {}
    for split, seed, count in (("train", 0, 16), ("val", 1, 8), ("test", 2, 8)):
        path = workspace / "data" / f"cvp-{split}.jsonl"
        save_dataset(gen_synthetic("cycle-vs-path", seed, n=5, count=count), str(path))
        paths[split] = str(path)
    return paths


@pytest.fixture
def make_config(workspace):
    """Factory writing a flat dotted-key run config file into the workspace."""

    def write(entries: dict, name: str = "run.json") -> str:
        path = workspace / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(entries, fh)
        return str(path)

    return write

"""
Configuration.

Config
------
Process-level settings read from the environment (and from `.env` at the
project root):

    DIFFGRAPH_THREADS     evaluation fan-out cap (default 1)
    DIFFGRAPH_LOG_LEVEL   root log level for the CLI (default INFO)
    DIFFGRAPH_DATA_DIR    default output folder of `gen`
    DIFFGRAPH_RUNS_DIR    default output folder of `train` / `compare`

RunConfig
---------
One experiment: model + optimizer hyperparameters, dataset paths, output
folder and seed list.  Files are flat JSON objects with dotted keys

    {"model.hidden": 32, "model.mpnn_kind": "gcn", "optim.epochs": 300,
     "data.train": "data/sbm.json", "run.seeds": [0]}

and command-line overrides are `key=value` pairs whose key is either dotted
or a bare field name that is unique across sections (`use_diff_local=false`).
Values are parsed as JSON and fall back to plain strings.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Iterable

from dotenv import load_dotenv

from errors import ConfigError
from model.model_config import ModelConfig
from training.optim import OptimizerConfig

# Always load .env from the project root regardless of CWD where Python is launched
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
load_dotenv(os.path.join(BASE_DIR, ".env"), override=True)

logger = logging.getLogger(__name__)


def _env_int(name: str, default: int) -> int:
    try:
        return max(int(os.getenv(name, str(default))), 1)
    except ValueError:
        return default


class Config:
    THREADS = _env_int("DIFFGRAPH_THREADS", 1)
    LOG_LEVEL = os.getenv("DIFFGRAPH_LOG_LEVEL", "INFO").upper()

    DATA_DIR = os.getenv("DIFFGRAPH_DATA_DIR", os.path.join(BASE_DIR, "data"))
    RUNS_DIR = os.getenv("DIFFGRAPH_RUNS_DIR", os.path.join(BASE_DIR, "runs"))
    CONFIGS_DIR = os.path.join(BASE_DIR, "configs")


# ── Run configuration ─────────────────────────────────────────────────────────

_DATA_KEYS = ("train", "val", "test")
_RUN_KEYS = ("out_dir", "seeds")


def _section_keys() -> dict[str, tuple[str, str, type]]:
    """dotted key -> (section, field, expected type)."""
    keys: dict[str, tuple[str, str, type]] = {}
    for section, cls in (("model", ModelConfig), ("optim", OptimizerConfig)):
        defaults = cls()
        for f in fields(cls):
            keys[f"{section}.{f.name}"] = (section, f.name, type(getattr(defaults, f.name)))
    for name in _DATA_KEYS:
        keys[f"data.{name}"] = ("data", name, str)
    keys["run.out_dir"] = ("run", "out_dir", str)
    keys["run.seeds"] = ("run", "seeds", list)
    return keys


RUN_KEYS = _section_keys()


def resolve_key(key: str) -> str:
    """Map a dotted or bare key to its dotted form."""
    if key in RUN_KEYS:
        return key
    matches = [k for k in RUN_KEYS if k.split(".", 1)[1] == key]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise ConfigError(f"key {key!r} is ambiguous; use one of {matches}")
    raise ConfigError(f"unknown config key {key!r}")


def _coerce(key: str, value, expected: type):
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if expected is list:
        seeds = value if isinstance(value, list) else [value]
        if not seeds or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
            raise ConfigError(f"{key} must be an integer or a non-empty list of integers, got {value!r}")
        return list(seeds)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return resolve_key(key.strip()), value


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: str = ""
    val: str = ""
    test: str = ""
    out_dir: str = ""
    seeds: list[int] = field(default_factory=lambda: [0])

    def set(self, key: str, value) -> None:
        dotted = resolve_key(key)
        section, name, expected = RUN_KEYS[dotted]
        value = _coerce(dotted, value, expected)
        target = {"model": self.model, "optim": self.optim}.get(section, self)
        setattr(target, name, value)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.optim.validate()
        if not self.train:
            raise ConfigError("data.train is required")
        return self

    def to_flat(self) -> dict:
        flat = {}
        for dotted, (section, name, _) in RUN_KEYS.items():
            source = {"model": self.model, "optim": self.optim}.get(section, self)
            flat[dotted] = getattr(source, name)
        return dict(sorted(flat.items()))

    def save(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_flat(), fh, indent=2)
            fh.write("\n")


def _absolute(path: str) -> str:
    return os.path.abspath(path) if path else path


def load_run_config(path: str | None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a run config file (optional) and apply `key=value` overrides on top."""
    run = RunConfig()
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object of dotted keys")
        for key, value in raw.items():
            run.set(key, value)
    for text in overrides:
        key, value = parse_override(text)
        run.set(key, value)

    run.train, run.val, run.test = (_absolute(p) for p in (run.train, run.val, run.test))
    if not run.out_dir:
        stem = os.path.splitext(os.path.basename(path))[0] if path else "run"
        run.out_dir = os.path.join(Config.RUNS_DIR, stem)
    run.out_dir = _absolute(run.out_dir)
    logger.debug("Resolved run config: %s", run.to_flat())
    return run.validate()

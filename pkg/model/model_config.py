"""
ModelConfig: everything needed to rebuild a model from scratch.

The same dataclass is echoed into checkpoints and into the resolved run
configuration, so `to_dict()` / `from_dict()` must stay lossless.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from errors import ConfigError

MPNN_KINDS = ("gcn", "gat", "gatedgcn")
TASKS = ("graph-class", "node-class", "multi-label", "link-pred")
READOUTS = ("mean", "sum")

# task -> label kind the dataset must carry
TASK_LABELS = {
    "graph-class": "graph",
    "node-class": "node",
    "multi-label": "multilabel",
    "link-pred": "pairs",
}


@dataclass
class ModelConfig:
    num_layers: int = 4
    hidden: int = 64
    input_dim: int = 1
    edge_dim: int = 0
    heads: int = 4
    mpnn_kind: str = "gcn"
    gat_heads: int = 1
    use_diff_local: bool = True
    use_diff_global: bool = True
    use_local: bool = True
    use_global: bool = True
    readout: str = "mean"
    task: str = "graph-class"
    num_classes: int = 2
    ffn_ratio: int = 2
    dropout: float = 0.0
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden < 1 or self.input_dim < 1 or self.ffn_ratio < 1:
            raise ConfigError("hidden, input_dim and ffn_ratio must be >= 1")
        if self.edge_dim < 0:
            raise ConfigError(f"edge_dim must be >= 0, got {self.edge_dim}")
        if self.heads < 1 or self.hidden % self.heads:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.mpnn_kind not in MPNN_KINDS:
            raise ConfigError(f"mpnn_kind must be one of {list(MPNN_KINDS)}, got {self.mpnn_kind!r}")
        if self.mpnn_kind == "gat" and (self.gat_heads < 1 or self.hidden % self.gat_heads):
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by gat_heads ({self.gat_heads})")
        if not (self.use_local or self.use_global):
            raise ConfigError("at least one of use_local / use_global must be true")
        if self.readout not in READOUTS:
            raise ConfigError(f"readout must be one of {list(READOUTS)}, got {self.readout!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {list(TASKS)}, got {self.task!r}")
        if self.task != "link-pred" and self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self

    @property
    def label_kind(self) -> str:
        return TASK_LABELS[self.task]

    @property
    def diff_local(self) -> bool:
        return self.use_local and self.use_diff_local

    @property
    def diff_global(self) -> bool:
        return self.use_global and self.use_diff_global

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**raw).validate()

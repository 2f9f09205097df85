"""Model hyperparameters and the flat key=value config format."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

SEED_ENV = "EVSUMM_SEED"


@dataclass
class ModelConfig:
    code_vocab: int = 0
    comment_vocab: int = 0
    embedding_dim: int = 32
    hidden_dim: int = 32
    num_layers: int = 2
    dropout: float = 0.2
    max_code_len: int = 100
    max_comment_len: int = 35
    beam_width: int = 5
    clip_threshold: float = 5.0
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    freeze_pretrained: bool = False
    length_normalize: bool = False

    def __post_init__(self):
        self.validate(require_vocab=False)

    def validate(self, require_vocab: bool = True) -> None:
        counts = ["embedding_dim", "hidden_dim", "num_layers", "max_code_len", "max_comment_len",
                  "beam_width", "batch_size"]
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if require_vocab and (self.code_vocab < 5 or self.comment_vocab < 4):
            raise ValueError("vocabulary sizes must include the four reserved ids")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def _coerce(raw: str, kind):
    if kind is bool or kind == "bool":
        lowered = raw.strip().lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {raw!r}")
        return lowered in ("1", "true", "yes", "on")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw


def read_flat_config(path) -> dict[str, str]:
    """``key = value`` per line; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def model_config_from_flat(values: dict[str, str], base: ModelConfig | None = None) -> ModelConfig:
    cfg = base or ModelConfig()
    types = {f.name: f.type for f in fields(ModelConfig)}
    changes = {}
    for key, raw in values.items():
        if key in types:
            changes[key] = _coerce(raw, types[key])
    return cfg.replace(**changes)


def env_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else default

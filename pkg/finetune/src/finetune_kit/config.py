"""Training configuration.

The defaults are the kit's reference study setup: batch size 4 with 8
gradient-accumulation steps, learning rate 2e-4 on a linear decay, seed
3407, two epochs. Everything is overridable; the adapter shape knobs live
in the nested ``lora`` section.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .lora import LoraConfig


@dataclass(frozen=True)
class TrainConfig:
    base_model: str
    dataset_path: str
    adapter_output_dir: str
    epochs: int = 2
    batch_size: int = 4
    grad_accum_steps: int = 8
    learning_rate: float = 2e-4
    seed: int = 3407
    max_seq_len: int = 4096
    max_steps: int | None = None
    lora: LoraConfig = field(default_factory=LoraConfig)

    def __post_init__(self) -> None:
        for name in ("base_model", "dataset_path", "adapter_output_dir"):
            if not getattr(self, name):
                raise ConfigError(f"{name} is required")
        for name in ("epochs", "batch_size", "grad_accum_steps", "max_seq_len"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1 when set")

    def to_dict(self) -> dict:
        return {
            "base_model": self.base_model,
            "dataset_path": self.dataset_path,
            "adapter_output_dir": self.adapter_output_dir,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "grad_accum_steps": self.grad_accum_steps,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "max_seq_len": self.max_seq_len,
            "max_steps": self.max_steps,
            "lora": self.lora.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a mapping")
        known = {
            "base_model", "dataset_path", "adapter_output_dir", "epochs",
            "batch_size", "grad_accum_steps", "learning_rate", "seed",
            "max_seq_len", "max_steps", "lora",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        fields = dict(obj)
        lora = fields.pop("lora", None)
        if lora is not None:
            if not isinstance(lora, dict):
                raise ConfigError("lora section must be a mapping")
            fields["lora"] = LoraConfig.from_dict(lora)
        return cls(**fields)


def load_train_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    try:
        obj = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if obj is None:
        raise ConfigError(f"config file is empty: {path}")
    return TrainConfig.from_dict(obj)


def dump_train_config(config: TrainConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)

"""Low-rank adapter injection for causal language models.

Wraps selected projection layers with a frozen base plus a trainable
low-rank update ``B @ A`` scaled by ``alpha / r``. Both ``torch.nn.Linear``
and the GPT-2 style ``transformers`` ``Conv1D`` projection are supported;
everything else stays frozen. ``B`` starts at zero, so injection leaves
the model's function unchanged until training moves the adapter weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn
from transformers.pytorch_utils import Conv1D

from .errors import ConfigError

ADAPTER_WEIGHTS = "adapter.pt"
ADAPTER_CONFIG = "adapter_config.json"

DEFAULT_TARGET_MODULES = ("c_attn", "q_proj", "k_proj", "v_proj", "o_proj")


@dataclass(frozen=True)
class LoraConfig:
    r: int = 16
    alpha: int = 32
    dropout: float = 0.05
    target_modules: tuple[str, ...] = field(default_factory=lambda: DEFAULT_TARGET_MODULES)

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ConfigError("lora r must be >= 1")
        if self.alpha < 1:
            raise ConfigError("lora alpha must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("lora dropout must be in [0, 1)")
        if not self.target_modules:
            raise ConfigError("lora target_modules must not be empty")
        object.__setattr__(self, "target_modules", tuple(self.target_modules))

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "alpha": self.alpha,
            "dropout": self.dropout,
            "target_modules": list(self.target_modules),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LoraConfig":
        known = {"r", "alpha", "dropout", "target_modules"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown keys under lora: {', '.join(sorted(unknown))}")
        fields = dict(obj)
        if "target_modules" in fields:
            fields["target_modules"] = tuple(fields["target_modules"])
        return cls(**fields)


def _base_shape(module: nn.Module) -> tuple[int, int]:
    """(in_features, out_features) of a wrappable projection."""
    if isinstance(module, nn.Linear):
        return module.in_features, module.out_features
    if isinstance(module, Conv1D):
        return module.weight.shape[0], module.nf
    raise ConfigError(f"cannot wrap module of type {type(module).__name__}")


class LoraAdapter(nn.Module):
    """A frozen projection plus a trainable low-rank residual path."""

    def __init__(self, base: nn.Module, cfg: LoraConfig) -> None:
        super().__init__()
        in_features, out_features = _base_shape(base)
        self.base = base
        self.scaling = cfg.alpha / cfg.r
        self.lora_dropout = nn.Dropout(cfg.dropout)
        self.lora_a = nn.Linear(in_features, cfg.r, bias=False)
        self.lora_b = nn.Linear(cfg.r, out_features, bias=False)
        nn.init.kaiming_uniform_(self.lora_a.weight, a=math.sqrt(5))
        nn.init.zeros_(self.lora_b.weight)
        for param in self.base.parameters():
            param.requires_grad = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = self.lora_b(self.lora_a(self.lora_dropout(x))) * self.scaling
        return self.base(x) + update


def inject_lora(model: nn.Module, cfg: LoraConfig) -> int:
    """Wrap every matching projection; freeze everything else. Returns the wrap count."""
    targets = []
    for name, module in model.named_modules():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in cfg.target_modules and isinstance(module, (nn.Linear, Conv1D)):
            targets.append(name)
    if not targets:
        raise ConfigError(
            f"no modules matched target_modules {list(cfg.target_modules)}"
        )
    for name in targets:
        parent_name, _, leaf = name.rpartition(".")
        parent = model.get_submodule(parent_name) if parent_name else model
        setattr(parent, leaf, LoraAdapter(getattr(parent, leaf), cfg))
    for name, param in model.named_parameters():
        param.requires_grad = "lora_a" in name or "lora_b" in name
    return len(targets)


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def save_adapter(model: nn.Module, cfg: LoraConfig, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(lora_state_dict(model), out_dir / ADAPTER_WEIGHTS)
    (out_dir / ADAPTER_CONFIG).write_text(
        json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return out_dir


def load_adapter(model: nn.Module, adapter_dir: str | Path) -> None:
    """Load saved adapter weights into a model already injected with the same shape."""
    adapter_dir = Path(adapter_dir)
    weights_path = adapter_dir / ADAPTER_WEIGHTS
    if not weights_path.exists():
        raise ConfigError(f"no adapter weights at {weights_path}")
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    _, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ConfigError(f"adapter has weights the model cannot place: {unexpected[:3]}")

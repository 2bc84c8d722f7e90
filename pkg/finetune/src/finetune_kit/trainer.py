"""Supervised fine-tuning loop.

AdamW over the adapter parameters only, with a linear learning-rate decay
across the planned optimizer steps. Micro-batches are grouped into
accumulation windows; one log line ``{"step", "loss", "lr"}`` is written
per optimizer step, where ``loss`` is the mean micro-batch loss of the
window. A non-finite loss aborts immediately with step diagnostics.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .config import TrainConfig
from .data import Tokenizer, collate, encode_dataset
from .errors import ConfigError, TrainingError
from .formatting import load_training_jsonl
from .lora import inject_lora, save_adapter

TRAINING_LOG = "training_log.jsonl"


@dataclass(frozen=True)
class TrainResult:
    steps: int
    losses: tuple[float, ...]
    adapter_dir: Path
    log_path: Path


def _load_base(base_model: str):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForCausalLM.from_pretrained(base_model)
    return model, tokenizer


def _plan_steps(n_examples: int, config: TrainConfig) -> int:
    micro_per_epoch = math.ceil(n_examples / config.batch_size)
    steps_per_epoch = math.ceil(micro_per_epoch / config.grad_accum_steps)
    total = steps_per_epoch * config.epochs
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    return total


def train(
    config: TrainConfig,
    model: nn.Module | None = None,
    tokenizer: Tokenizer | None = None,
) -> TrainResult:
    """Fine-tune adapters on an exported dataset; returns the per-step losses.

    ``model`` and ``tokenizer`` may be passed directly (both or neither);
    otherwise they are loaded from ``config.base_model``.
    """
    if (model is None) != (tokenizer is None):
        raise ConfigError("pass both model and tokenizer, or neither")

    # schema violations abort here, before any model work
    records = load_training_jsonl(config.dataset_path)

    if model is None:
        model, tokenizer = _load_base(config.base_model)

    random.seed(config.seed)
    torch.manual_seed(config.seed)

    inject_lora(model, config.lora)
    model.train()

    pad_token_id = tokenizer.pad_token_id
    if pad_token_id is None:
        pad_token_id = tokenizer.eos_token_id
    encoded = encode_dataset(records, tokenizer, config.max_seq_len)

    total_steps = _plan_steps(len(encoded), config)
    trainable = [param for param in model.parameters() if param.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=config.learning_rate)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, (total_steps - step) / total_steps)
    )

    adapter_dir = Path(config.adapter_output_dir)
    adapter_dir.mkdir(parents=True, exist_ok=True)
    log_path = adapter_dir / TRAINING_LOG

    shuffle = torch.Generator().manual_seed(config.seed)
    losses: list[float] = []
    step = 0
    with log_path.open("w", encoding="utf-8") as log:
        for _ in range(config.epochs):
            if step >= total_steps:
                break
            order = torch.randperm(len(encoded), generator=shuffle).tolist()
            micro_batches = [
                [encoded[i] for i in order[start : start + config.batch_size]]
                for start in range(0, len(order), config.batch_size)
            ]
            for window_start in range(0, len(micro_batches), config.grad_accum_steps):
                window = micro_batches[window_start : window_start + config.grad_accum_steps]
                optimizer.zero_grad()
                window_losses = []
                for batch in window:
                    tensors = collate(batch, pad_token_id)
                    out = model(**tensors)
                    micro_loss = out.loss
                    if not torch.isfinite(micro_loss):
                        raise TrainingError(
                            f"non-finite loss {micro_loss.item()!r} at step {step + 1} "
                            f"(example ids: {[b.example_id for b in batch]})"
                        )
                    (micro_loss / len(window)).backward()
                    window_losses.append(micro_loss.item())
                lr_used = optimizer.param_groups[0]["lr"]
                optimizer.step()
                scheduler.step()
                step += 1
                loss = sum(window_losses) / len(window_losses)
                losses.append(loss)
                log.write(json.dumps({"step": step, "loss": loss, "lr": lr_used}) + "\n")
                if step >= total_steps:
                    break

    save_adapter(model, config.lora, adapter_dir)
    tokenizer.save_pretrained(adapter_dir)
    return TrainResult(
        steps=step, losses=tuple(losses), adapter_dir=adapter_dir, log_path=log_path
    )

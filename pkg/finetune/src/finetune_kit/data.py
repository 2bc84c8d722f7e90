"""Tokenization, label masking, and batch collation.

The prompt prefix (through the assistant tag) and the gold output are
encoded separately: prefix positions get label -100 so only gold-output
tokens (plus the EOS closing the turn) contribute to the loss. Padding
positions get attention 0 and label -100.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import torch

from .errors import DatasetSchemaError
from .formatting import prompt_text

IGNORE_INDEX = -100


class Tokenizer(Protocol):
    """The minimal tokenizer surface the kit relies on."""

    eos_token_id: int
    pad_token_id: int | None

    def encode(self, text: str, add_special_tokens: bool = ...) -> list[int]: ...

    def save_pretrained(self, path) -> object: ...


@dataclass(frozen=True)
class EncodedExample:
    example_id: str
    input_ids: tuple[int, ...]
    labels: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.input_ids)


def encode_example(record: dict, tokenizer: Tokenizer, max_seq_len: int) -> EncodedExample:
    prefix = prompt_text(record)
    prefix_ids = list(tokenizer.encode(prefix, add_special_tokens=False))
    output_ids = list(tokenizer.encode(record["output"], add_special_tokens=False))
    output_ids.append(tokenizer.eos_token_id)

    input_ids = (prefix_ids + output_ids)[:max_seq_len]
    labels = ([IGNORE_INDEX] * len(prefix_ids) + output_ids)[:max_seq_len]
    if all(label == IGNORE_INDEX for label in labels):
        raise DatasetSchemaError(
            f"{record['example_id']}: no supervised tokens left after truncation "
            f"to {max_seq_len} (prompt alone has {len(prefix_ids)} tokens)"
        )
    return EncodedExample(
        example_id=record["example_id"],
        input_ids=tuple(input_ids),
        labels=tuple(labels),
    )


def encode_dataset(
    records: Sequence[dict], tokenizer: Tokenizer, max_seq_len: int
) -> list[EncodedExample]:
    return [encode_example(record, tokenizer, max_seq_len) for record in records]


def collate(batch: Sequence[EncodedExample], pad_token_id: int) -> dict[str, torch.Tensor]:
    """Right-pad a batch to its longest member."""
    if not batch:
        raise DatasetSchemaError("cannot collate an empty batch")
    width = max(len(example) for example in batch)
    input_ids = torch.full((len(batch), width), pad_token_id, dtype=torch.long)
    labels = torch.full((len(batch), width), IGNORE_INDEX, dtype=torch.long)
    attention_mask = torch.zeros((len(batch), width), dtype=torch.long)
    for row, example in enumerate(batch):
        n = len(example)
        input_ids[row, :n] = torch.tensor(example.input_ids, dtype=torch.long)
        labels[row, :n] = torch.tensor(example.labels, dtype=torch.long)
        attention_mask[row, :n] = 1
    return {"input_ids": input_ids, "labels": labels, "attention_mask": attention_mask}

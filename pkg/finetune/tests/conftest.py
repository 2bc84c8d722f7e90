import json
from pathlib import Path

import pytest
import torch
from transformers import GPT2Config, GPT2LMHeadModel

GOLDEN_CASES = Path(__file__).parents[2] / "prompts" / "golden" / "chat_format_cases.jsonl"

VARIANTS = ("direct", "cot_neighbour", "advanced_reasoning", "verb_reasoning")


class CharTokenizer:
    """Character-level tokenizer covering the latin-1 range; ids 0/1 are eos/pad."""

    eos_token_id = 0
    pad_token_id = 1
    vocab_size = 258

    def encode(self, text, add_special_tokens=False):
        return [2 + min(ord(ch), 255) for ch in text]

    def save_pretrained(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        (path / "tokenizer.json").write_text(
            json.dumps({"scheme": "char-latin1", "vocab_size": self.vocab_size})
        )
        return (str(path / "tokenizer.json"),)


def make_tiny_model(seed: int = 7) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=CharTokenizer.vocab_size,
        n_embd=32,
        n_layer=2,
        n_head=2,
        n_positions=512,
        bos_token_id=0,
        eos_token_id=0,
    )
    return GPT2LMHeadModel(config)


def toy_records(n: int = 32) -> list[dict]:
    rows = []
    for i in range(n):
        variant = VARIANTS[i % len(VARIANTS)]
        rows.append(
            {
                "example_id": f"{variant}:toy:{i}",
                "system": "You identify word senses.",
                "input": f"Sentence: the <WSD>bank</WSD> case {i}.\nWhich sense fits?",
                "output": f"Sense ID: bank.noun.{1 + i % 2}",
                "variant": variant,
                "instance_id": f"toy:{i}",
            }
        )
    return rows


@pytest.fixture()
def tokenizer():
    return CharTokenizer()


@pytest.fixture()
def toy_dataset(tmp_path):
    path = tmp_path / "toy.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in toy_records()) + "\n")
    return path

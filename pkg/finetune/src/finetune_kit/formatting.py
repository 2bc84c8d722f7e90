"""Chat-style formatting of exported training records.

The upstream toolkit exports JSONL records with exactly six string fields.
This module turns a record into the single training string

    <|system|>\\n{system}\\n<|user|>\\n{input}\\n<|assistant|>\\n{output}

with no trailing newline. The rendering is pinned byte-for-byte by the
shared golden fixture shipped with the exporter, so prompts seen in
training match prompts sent at inference exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DatasetSchemaError

REQUIRED_FIELDS = ("example_id", "system", "input", "output", "variant", "instance_id")

KNOWN_VARIANTS = ("direct", "cot_neighbour", "advanced_reasoning", "verb_reasoning")

SYSTEM_TAG = "<|system|>\n"
USER_TAG = "\n<|user|>\n"
ASSISTANT_TAG = "\n<|assistant|>\n"


def validate_record(obj: object, where: str = "record") -> dict:
    """Check one parsed JSONL object against the exported-dataset schema."""
    if not isinstance(obj, dict):
        raise DatasetSchemaError(f"{where}: expected a JSON object, got {type(obj).__name__}")
    missing = [field for field in REQUIRED_FIELDS if field not in obj]
    if missing:
        raise DatasetSchemaError(f"{where}: missing fields: {', '.join(missing)}")
    unknown = [key for key in obj if key not in REQUIRED_FIELDS]
    if unknown:
        raise DatasetSchemaError(f"{where}: unknown fields: {', '.join(sorted(unknown))}")
    for field in REQUIRED_FIELDS:
        if not isinstance(obj[field], str):
            raise DatasetSchemaError(
                f"{where}: field {field!r} must be a string, got {type(obj[field]).__name__}"
            )
    if obj["variant"] not in KNOWN_VARIANTS:
        raise DatasetSchemaError(
            f"{where}: unknown variant {obj['variant']!r}; expected one of {', '.join(KNOWN_VARIANTS)}"
        )
    return obj


def load_training_jsonl(path: str | Path) -> list[dict]:
    """Load and validate an exported training file; any violation aborts."""
    path = Path(path)
    if not path.exists():
        raise DatasetSchemaError(f"no such dataset: {path}")
    records: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetSchemaError(f"{where}: invalid JSON: {exc}") from None
            records.append(validate_record(obj, where))
    if not records:
        raise DatasetSchemaError(f"{path}: dataset is empty")
    return records


def prompt_text(record: dict) -> str:
    """The supervised-input prefix: everything up to and including the assistant tag."""
    validate_record(record)
    return SYSTEM_TAG + record["system"] + USER_TAG + record["input"] + ASSISTANT_TAG


def format_example(record: dict) -> str:
    """Full chat-formatted training string, byte-compatible with the exporter."""
    return prompt_text(record) + record["output"]

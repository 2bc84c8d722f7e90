"""Parameter-efficient supervised fine-tuning over exported training data."""

from .config import TrainConfig, dump_train_config, load_train_config
from .data import IGNORE_INDEX, EncodedExample, collate, encode_dataset, encode_example
from .errors import ConfigError, DatasetSchemaError, FinetuneKitError, TrainingError
from .formatting import (
    KNOWN_VARIANTS,
    REQUIRED_FIELDS,
    format_example,
    load_training_jsonl,
    prompt_text,
    validate_record,
)
from .lora import (
    LoraAdapter,
    LoraConfig,
    inject_lora,
    load_adapter,
    lora_state_dict,
    save_adapter,
)
from .trainer import TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetSchemaError",
    "EncodedExample",
    "FinetuneKitError",
    "IGNORE_INDEX",
    "KNOWN_VARIANTS",
    "LoraAdapter",
    "LoraConfig",
    "REQUIRED_FIELDS",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "collate",
    "dump_train_config",
    "encode_dataset",
    "encode_example",
    "format_example",
    "inject_lora",
    "load_adapter",
    "load_train_config",
    "load_training_jsonl",
    "lora_state_dict",
    "prompt_text",
    "save_adapter",
    "train",
    "validate_record",
    "__version__",
]

"""Exception hierarchy for the fine-tuning kit."""


class FinetuneKitError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(FinetuneKitError):
    """Invalid or inconsistent configuration."""


class DatasetSchemaError(FinetuneKitError):
    """A training JSONL file violates the exported-dataset schema."""


class TrainingError(FinetuneKitError):
    """Training aborted; the message carries step-level diagnostics."""

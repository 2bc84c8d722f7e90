"""Command-line entry points for the fine-tuning kit."""

from __future__ import annotations

import json
import sys

import click

from . import errors
from .config import TrainConfig, dump_train_config, load_train_config
from .formatting import format_example, load_training_jsonl


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


@click.group()
def main() -> None:
    """Parameter-efficient fine-tuning over exported training data."""


@main.command("config-show")
@click.option("--config", "config_path", default=None, help="YAML config; defaults shown otherwise.")
def config_show(config_path: str | None) -> None:
    """Print the effective training configuration."""
    try:
        if config_path is None:
            config = TrainConfig(
                base_model="<base-model>",
                dataset_path="<dataset.jsonl>",
                adapter_output_dir="<adapters>",
            )
        else:
            config = load_train_config(config_path)
    except errors.FinetuneKitError as exc:
        _fail(str(exc))
    click.echo(dump_train_config(config), nl=False)


@main.command()
@click.option("--dataset", required=True, help="Exported training JSONL file.")
def validate(dataset: str) -> None:
    """Schema-check a dataset without training."""
    try:
        records = load_training_jsonl(dataset)
    except errors.FinetuneKitError as exc:
        _fail(str(exc))
    click.echo(f"ok: {len(records)} records")


@main.command("format")
@click.option("--dataset", required=True)
@click.option("--index", default=0, show_default=True, type=int)
def format_cmd(dataset: str, index: int) -> None:
    """Print one record rendered as its chat-format training string."""
    try:
        records = load_training_jsonl(dataset)
        if not 0 <= index < len(records):
            raise errors.ConfigError(f"index {index} out of range (0..{len(records) - 1})")
        click.echo(format_example(records[index]))
    except errors.FinetuneKitError as exc:
        _fail(str(exc))


@main.command()
@click.option("--config", "config_path", required=True, help="Training YAML config.")
@click.option("--max-steps", default=None, type=int, help="Stop after this many optimizer steps.")
def train(config_path: str, max_steps: int | None) -> None:
    """Run supervised fine-tuning and save the adapters."""
    from .trainer import train as run_train

    try:
        config = load_train_config(config_path)
        if max_steps is not None:
            config = TrainConfig.from_dict({**config.to_dict(), "max_steps": max_steps})
        result = run_train(config)
    except errors.FinetuneKitError as exc:
        _fail(str(exc))
    click.echo(
        json.dumps(
            {
                "steps": result.steps,
                "final_loss": result.losses[-1] if result.losses else None,
                "adapter_dir": str(result.adapter_dir),
                "log": str(result.log_path),
            },
            indent=2,
        )
    )


if __name__ == "__main__":
    main()

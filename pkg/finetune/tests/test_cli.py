import json

import yaml
from click.testing import CliRunner

from finetune_kit.cli import main

from conftest import toy_records


def test_config_show_defaults():
    result = CliRunner().invoke(main, ["config-show"])
    assert result.exit_code == 0
    dumped = yaml.safe_load(result.output)
    assert dumped["batch_size"] == 4
    assert dumped["grad_accum_steps"] == 8
    assert dumped["learning_rate"] == 2e-4
    assert dumped["seed"] == 3407
    assert dumped["epochs"] == 2


def test_validate_ok(tmp_path):
    path = tmp_path / "toy.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in toy_records(4)) + "\n")
    result = CliRunner().invoke(main, ["validate", "--dataset", str(path)])
    assert result.exit_code == 0
    assert "ok: 4 records" in result.output


def test_validate_rejects_bad_schema(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"example_id": "x"}\n')
    result = CliRunner().invoke(main, ["validate", "--dataset", str(path)])
    assert result.exit_code == 2
    assert "missing fields" in result.stderr


def test_format_prints_chat_string(tmp_path):
    path = tmp_path / "toy.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in toy_records(2)) + "\n")
    result = CliRunner().invoke(main, ["format", "--dataset", str(path), "--index", "1"])
    assert result.exit_code == 0
    assert result.output.startswith("<|system|>\n")
    assert "\n<|assistant|>\nSense ID: bank.noun.2" in result.output


def test_format_index_out_of_range(tmp_path):
    path = tmp_path / "toy.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in toy_records(2)) + "\n")
    result = CliRunner().invoke(main, ["format", "--dataset", str(path), "--index", "9"])
    assert result.exit_code == 2
    assert "out of range" in result.stderr


def test_train_rejects_missing_config(tmp_path):
    result = CliRunner().invoke(main, ["train", "--config", str(tmp_path / "no.yaml")])
    assert result.exit_code == 2
    assert "no such config file" in result.stderr

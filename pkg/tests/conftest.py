import pytest
from pathlib import Path

from starlette.testclient import TestClient

from eadwsd.config import AppConfig
from eadwsd.corpus import load_instances, load_sense_inventory
from eadwsd.embedding import ConfigEmbedder, EmbeddingBackendConfig
from eadwsd.service import create_app

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def inventory():
    return load_sense_inventory(DATA / "inventory.tsv")


@pytest.fixture(scope="session")
def instances():
    return list(load_instances(DATA / "train.tsv"))


@pytest.fixture(scope="session")
def embedder():
    return ConfigEmbedder(EmbeddingBackendConfig(kind="deterministic_offline", dim=32))


def make_app_config(tmp_path: Path, **overrides) -> AppConfig:
    fields = dict(
        inventory=str(DATA / "inventory.tsv"),
        output_dir=str(tmp_path / "out"),
        corpora={"train": str(DATA / "train.tsv")},
        embedding=EmbeddingBackendConfig(kind="deterministic_offline", dim=32),
        judge_models=("judge-a",),
    )
    fields.update(overrides)
    return AppConfig(**fields)


@pytest.fixture
def app_config(tmp_path):
    return make_app_config(tmp_path)


@pytest.fixture
def client(app_config):
    return TestClient(create_app(app_config))

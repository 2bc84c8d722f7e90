"""YAML application config shared by the service and the CLI.

One file carries the inventory path, named corpora, context and embedding
settings, optional gateway endpoint, and judging knobs. Loading is strict:
unknown keys are rejected so typos cannot silently change behavior, and
referenced input paths must exist unless path checking is turned off.
The config round-trips: load(dump(cfg)) == cfg.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from . import errors
from .context import ContextConfig
from .embedding import EmbeddingBackendConfig
from .llm_gateway import GatewayPolicy, LlmGateway

DEFAULT_CONFIG_FILENAME = "eadwsd.yaml"
DEFAULT_FLAG_THRESHOLD = 3


@dataclass(frozen=True)
class GatewaySettings:
    base_url: str
    model: str
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_initial_ms: int = 500
    timeout_s: float = 120.0
    audit_log: str | None = None

    def __post_init__(self) -> None:
        if not self.base_url:
            raise errors.ConfigError("gateway.base_url must be non-empty")
        if not self.model:
            raise errors.ConfigError("gateway.model must be non-empty")

    def policy(self) -> GatewayPolicy:
        return GatewayPolicy(
            max_in_flight=self.max_in_flight,
            max_attempts=self.max_attempts,
            backoff_initial_ms=self.backoff_initial_ms,
            timeout_s=self.timeout_s,
        )

    def build(self, default_audit_log: str | Path | None = None) -> LlmGateway:
        audit = self.audit_log if self.audit_log is not None else default_audit_log
        return LlmGateway(
            base_url=self.base_url,
            model=self.model,
            policy=self.policy(),
            audit_log_path=audit,
        )

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "model": self.model,
            "max_in_flight": self.max_in_flight,
            "max_attempts": self.max_attempts,
            "backoff_initial_ms": self.backoff_initial_ms,
            "timeout_s": self.timeout_s,
            "audit_log": self.audit_log,
        }


def _from_mapping(cls, obj: Mapping, where: str):
    if not isinstance(obj, Mapping):
        raise errors.ConfigError(f"{where} must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(obj) - allowed
    if unknown:
        raise errors.ConfigError(f"unknown keys under {where}: {sorted(unknown)}")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise errors.ConfigError(f"bad {where} section: {exc}") from exc


@dataclass(frozen=True)
class AppConfig:
    inventory: str
    output_dir: str = "out"
    corpora: dict[str, str] = field(default_factory=dict)
    context: ContextConfig = field(default_factory=ContextConfig)
    embedding: EmbeddingBackendConfig = field(
        default_factory=lambda: EmbeddingBackendConfig(kind="deterministic_offline", dim=64)
    )
    gateway: GatewaySettings | None = None
    judge_models: tuple[str, ...] = ()
    flag_threshold: int = DEFAULT_FLAG_THRESHOLD

    def __post_init__(self) -> None:
        if not self.inventory:
            raise errors.ConfigError("inventory path must be set")
        if self.flag_threshold < 1 or self.flag_threshold > 5:
            raise errors.ConfigError("flag_threshold must lie in [1, 5]")
        object.__setattr__(self, "judge_models", tuple(self.judge_models))

    @property
    def review_dir(self) -> Path:
        return Path(self.output_dir) / "review"

    @property
    def audit_log_path(self) -> Path:
        return Path(self.output_dir) / "audit.jsonl"

    def corpus_path(self, name_or_path: str) -> Path:
        """Resolve a named corpus from config, falling back to a literal path."""
        if name_or_path in self.corpora:
            return Path(self.corpora[name_or_path])
        path = Path(name_or_path)
        if path.exists():
            return path
        raise errors.ConfigError(
            f"{name_or_path!r} is neither a configured corpus name nor an existing file"
        )

    def to_dict(self) -> dict:
        return {
            "inventory": self.inventory,
            "output_dir": self.output_dir,
            "corpora": dict(self.corpora),
            "context": {
                "window": self.context.window,
                "top_k": self.context.top_k,
                "stopword_list_id": self.context.stopword_list_id,
            },
            "embedding": {
                "kind": self.embedding.kind,
                "dim": self.embedding.dim,
                "endpoint_url": self.embedding.endpoint_url,
                "path": self.embedding.path,
                "model_name": self.embedding.model_name,
                "normalize": self.embedding.normalize,
                "cache_path": self.embedding.cache_path,
                "max_attempts": self.embedding.max_attempts,
                "backoff_initial_ms": self.embedding.backoff_initial_ms,
                "timeout_s": self.embedding.timeout_s,
            },
            "gateway": self.gateway.to_dict() if self.gateway else None,
            "judge_models": list(self.judge_models),
            "flag_threshold": self.flag_threshold,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "AppConfig":
        if not isinstance(obj, Mapping):
            raise errors.ConfigError("config root must be a mapping")
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise errors.ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "inventory" not in obj:
            raise errors.ConfigError("config requires an inventory path")
        kwargs: dict = {"inventory": obj["inventory"]}
        if "output_dir" in obj:
            kwargs["output_dir"] = obj["output_dir"]
        corpora = obj.get("corpora") or {}
        if not isinstance(corpora, Mapping):
            raise errors.ConfigError("corpora must map names to paths")
        kwargs["corpora"] = dict(corpora)
        if obj.get("context") is not None:
            kwargs["context"] = _from_mapping(ContextConfig, obj["context"], "context")
        if obj.get("embedding") is not None:
            kwargs["embedding"] = _from_mapping(
                EmbeddingBackendConfig, obj["embedding"], "embedding"
            )
        if obj.get("gateway") is not None:
            kwargs["gateway"] = _from_mapping(GatewaySettings, obj["gateway"], "gateway")
        if "judge_models" in obj and obj["judge_models"] is not None:
            models = obj["judge_models"]
            if not isinstance(models, (list, tuple)) or not all(
                isinstance(m, str) for m in models
            ):
                raise errors.ConfigError("judge_models must be a list of strings")
            kwargs["judge_models"] = tuple(models)
        if "flag_threshold" in obj and obj["flag_threshold"] is not None:
            kwargs["flag_threshold"] = obj["flag_threshold"]
        return cls(**kwargs)


def load_config(path: str | Path, check_paths: bool = True) -> AppConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise errors.ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise errors.ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raise errors.ConfigError(f"{path}: config file is empty")
    cfg = AppConfig.from_dict(raw)
    if check_paths:
        validate_paths(cfg)
    return cfg


def validate_paths(cfg: AppConfig) -> None:
    """Inputs must exist up front so long runs cannot die halfway in."""
    missing = []
    if not Path(cfg.inventory).exists():
        missing.append(f"inventory: {cfg.inventory}")
    for name, corpus_path in cfg.corpora.items():
        if not Path(corpus_path).exists():
            missing.append(f"corpora.{name}: {corpus_path}")
    if missing:
        raise errors.ConfigError("missing input paths: " + "; ".join(missing))
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)


def dump_config(cfg: AppConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, allow_unicode=True)


def save_config(cfg: AppConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")

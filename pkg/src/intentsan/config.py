"""Flat ``key = value`` run configuration shared by the CLI commands."""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .data import DatasetSpec
from .errors import ConfigError
from .training import TrainConfig

CONFIG_DIR_ENV = "INTENTSAN_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "intentsan.conf"


@dataclass
class CliConfig:
    # optimisation and model
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 25
    l2_gamma: float = 0.01
    hidden_units: int = 64
    embedding_dim: int = 300
    seed: int = 0
    arch: str = "bilstm"
    embeddings: str = "random"
    freeze_embeddings: str = "auto"  # auto | true | false
    loss_reduction: str = "sum"
    # data
    dataset: str = ""
    dataset_format: str = "jsonl"
    dataset_name: str = "dataset"
    val_dataset: str = ""
    test_dataset: str = ""
    test_fraction: float = 0.1
    val_fraction: float = 0.1  # share of the training part
    lowercase: bool = True
    # outputs
    output_dir: str = "run"

    def __post_init__(self):
        if self.freeze_embeddings not in ("auto", "true", "false"):
            raise ConfigError(f"freeze_embeddings must be auto, true or false, got {self.freeze_embeddings!r}")
        for name in ("test_fraction", "val_fraction"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        self.train_config()  # validates the optimisation keys
        self.dataset_spec()

    def train_config(self) -> TrainConfig:
        freeze = {"auto": None, "true": True, "false": False}[self.freeze_embeddings]
        return TrainConfig(
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            batch_size=self.batch_size, epochs=self.epochs, l2_gamma=self.l2_gamma,
            hidden_units=self.hidden_units, embedding_dim=self.embedding_dim, seed=self.seed,
            arch=self.arch, embeddings=self.embeddings, freeze_embeddings=freeze,
            loss_reduction=self.loss_reduction, lowercase=self.lowercase,
        )

    @property
    def ratios(self) -> tuple[float, float, float]:
        test = self.test_fraction
        val = (1 - test) * self.val_fraction
        return (1 - test - val, val, test)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(self.dataset_name, self.dataset_format, None, self.ratios, self.seed, self.lowercase)

    def render(self) -> str:
        lines = [f"{f.name} = {_format(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()[:16]


KEYS = {f.name: f for f in fields(CliConfig)}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce(key: str, raw: str):
    field = KEYS.get(key)
    if field is None:
        raise ConfigError(f"unknown config key {key!r}")
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw.strip()


def parse_config(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = coerce(key, raw)
    return values


def resolve_config_path(path: str | None) -> Path | None:
    """Explicit path, else ``$INTENTSAN_CONFIG_DIR/<path or intentsan.conf>`` when that exists."""
    base = os.environ.get(CONFIG_DIR_ENV)
    if path:
        p = Path(path)
        if not p.exists() and base and not p.is_absolute() and (Path(base) / p).exists():
            return Path(base) / p
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        return p
    if base and (Path(base) / DEFAULT_CONFIG_NAME).exists():
        return Path(base) / DEFAULT_CONFIG_NAME
    return None


def load_config(path: str | None = None, overrides: dict | None = None) -> CliConfig:
    values = {}
    resolved = resolve_config_path(path)
    if resolved is not None:
        values.update(parse_config(resolved.read_text(encoding="utf-8"), str(resolved)))
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return CliConfig(**values)


def replace(cfg: CliConfig, **changes) -> CliConfig:
    return dataclasses.replace(cfg, **changes)

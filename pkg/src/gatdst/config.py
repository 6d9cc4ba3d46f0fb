"""Run configuration: one JSON file drives a run; flags override single keys.

Sections: model (architecture), graph (type and L/P/K), training (regime,
epochs, learning rates, seed), split (fractions and split seed), synth
(generator settings), paths (ontology, corpus, checkpoint, report dir).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gat import GRAPH_TYPES, config_name
from .model import LmConfig
from .synth import SynthConfig


@dataclass
class GraphConfig:
    graph_type: str = "NoGraph"
    layers: int = 0
    heads: int = 0
    hops: int = 0
    activation: str = "leaky_relu"
    activation_slope: float = 0.2
    leaky_slope: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.graph_type not in GRAPH_TYPES:
            raise ConfigError(f"graph_type must be one of {GRAPH_TYPES}, got {self.graph_type!r}")
        dims = (self.layers, self.heads, self.hops)
        if self.graph_type == "NoGraph" and dims != (0, 0, 0):
            raise ConfigError("NoGraph forces layers=heads=hops=0")
        if self.graph_type != "NoGraph" and min(dims) < 1:
            raise ConfigError(f"{self.graph_type} requires layers, heads, hops >= 1")

    @property
    def name(self) -> str:
        return config_name(self.graph_type, self.layers, self.heads, self.hops)


@dataclass
class TrainingConfig:
    regime: str = "full"
    epochs: int | None = None  # None: 8 for full, 36 for last_turn
    batch_size: int = 8
    lr_lm: float = 6.25e-5
    lr_gat: float = 8e-5
    weight_decay: float = 0.01
    seed: int = 0
    max_value_tokens: int = 8

    def validate(self) -> None:
        if self.regime not in ("full", "last_turn"):
            raise ConfigError(f"regime must be 'full' or 'last_turn', got {self.regime!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr_lm < 0 or self.lr_gat < 0:
            raise ConfigError("learning rates must be >= 0")


@dataclass
class SplitConfig:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    seed: int = 1234


@dataclass
class PathsConfig:
    ontology: str = "ontology.json"
    corpus: str = "corpus.jsonl"
    checkpoint: str = "model.ckpt.json"
    report_dir: str = "reports"


@dataclass
class RunConfig:
    model: LmConfig = field(default_factory=LmConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> None:
        self.graph.validate()
        self.training.validate()
        self.synth.validate()


_SECTIONS = {
    "model": LmConfig,
    "graph": GraphConfig,
    "training": TrainingConfig,
    "split": SplitConfig,
    "synth": SynthConfig,
    "paths": PathsConfig,
}


def _build_section(name: str, cls, data: dict):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    if name == "synth" and "shared_pools" in data:
        data = {**data, "shared_pools": {k: tuple(v) for k, v in data["shared_pools"].items()}}
    for key in ("correlated_types", "utterance_templates"):
        if name == "synth" and key in data:
            data = {**data, key: tuple(data[key])}
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from exc


def config_from_obj(obj: dict) -> RunConfig:
    unknown = set(obj) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        sections[name] = _build_section(name, cls, dict(obj.get(name, {})))
    config = RunConfig(**sections)
    config.validate()
    return config


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at {path}:{exc.lineno}: {exc.msg}") from exc
    for item in overrides or []:
        obj = apply_override(obj, item)
    return config_from_obj(obj)


def apply_override(obj: dict, item: str) -> dict:
    """Apply one 'section.key=value' override; values parse as JSON, else string."""
    if "=" not in item:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    dotted, raw = item.split("=", 1)
    parts = dotted.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key must be section.key, got {dotted!r}")
    section, key = parts
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in obj.items()}
    out.setdefault(section, {})
    out[section][key] = value
    return out

"""Versioned JSON checkpoints.

A checkpoint is self-contained: architecture config, graph config, tokenizer
vocabulary, the canonical slot order it was trained against, and every named
parameter as (name, shape, flat float64 values). Loading rebuilds the model
and stack and rejects any shape mismatch.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import DataError
from .gat import GatStack, init_gat_stack
from .model import LmConfig, TrackerModel, init_model
from .tokenizer import Tokenizer

FORMAT_VERSION = 1

_CONFIG_NAME_RE = re.compile(r"^L(\d+)P(\d+)K(\d+)-(NoGraph|DSGraph|DSVGraph)$")


def parse_config_name(name: str) -> tuple[int, int, int, str]:
    m = _CONFIG_NAME_RE.match(name)
    if not m:
        raise DataError(f"unrecognized graph config name {name!r}")
    return int(m.group(1)), int(m.group(2)), int(m.group(3)), m.group(4)


def save_checkpoint(
    path: str | Path,
    model: TrackerModel,
    stack: GatStack,
    slot_keys: tuple[str, ...],
) -> None:
    cfg = model.config
    gat_meta = {"config_name": stack.config_name}
    if stack.layers:
        layer = stack.layers[0]
        gat_meta.update(
            activation=layer.activation,
            activation_slope=layer.activation_slope,
            leaky_slope=layer.leaky_slope,
        )
    named = list(model.named_parameters()) + [(p.name, p) for p in stack.parameters()]
    obj = {
        "format_version": FORMAT_VERSION,
        "lm_config": {
            "layers": cfg.layers,
            "heads": cfg.heads,
            "hidden_size": cfg.hidden_size,
            "context_length": cfg.context_length,
            "ff_multiplier": cfg.ff_multiplier,
            "seed": cfg.seed,
            "init_scale": cfg.init_scale,
        },
        "gat_config": gat_meta,
        "vocabulary": model.tokenizer.vocabulary,
        "slot_keys": list(slot_keys),
        "parameters": [
            {"name": name, "shape": list(p.shape), "values": p.values.tolist()}
            for name, p in named
        ],
    }
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[TrackerModel, GatStack, tuple[str, ...]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint parse error: {exc.msg}") from exc
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format version {version!r}")
    try:
        config = LmConfig(**obj["lm_config"])
        tokenizer = Tokenizer(obj["vocabulary"])
        model = init_model(config, tokenizer)
        layers, heads, hops, graph_type = parse_config_name(
            obj["gat_config"]["config_name"]
        )
        stack = init_gat_stack(
            graph_type,
            layers,
            heads,
            hops,
            feature_dim=config.hidden_size,
            activation=obj["gat_config"].get("activation", "leaky_relu"),
            activation_slope=obj["gat_config"].get("activation_slope", 0.2),
            leaky_slope=obj["gat_config"].get("leaky_slope", 0.2),
        )
        stored = obj["parameters"]
        slot_keys = tuple(obj["slot_keys"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint missing or malformed field: {exc}") from exc

    named = dict(model.named_parameters())
    named.update({p.name: p for p in stack.parameters()})
    if set(named) != {entry["name"] for entry in stored}:
        raise DataError("checkpoint parameter names do not match the rebuilt model")
    for entry in stored:
        p = named[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != p.shape:
            raise DataError(
                f"checkpoint parameter {entry['name']!r} has shape {shape}, "
                f"expected {p.shape}"
            )
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != p.data.size:
            raise DataError(
                f"checkpoint parameter {entry['name']!r} has {values.size} values, "
                f"expected {p.data.size}"
            )
        p.data = values.reshape(shape)
    return model, stack, slot_keys

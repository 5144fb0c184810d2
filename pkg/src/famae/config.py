"""Run configuration: one JSON file, strict keys, defaulted sections.

A run is fully described by its resolved config plus the seed; the resolved
form is echoed to ``config.json`` next to every run's outputs and, fed back
in, reproduces the run. ``--set section.key=value`` overrides individual
entries (values parsed as JSON, falling back to plain strings). Unknown keys
are rejected by name.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

__all__ = ["ConfigError", "DEFAULT_CONFIG", "resolve_config", "load_config_file", "config_hash"]


class ConfigError(ValueError):
    """Invalid run configuration."""


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "output_dir": "runs",
    "model": {
        "depth": 4,
        "width": 64,
        "heads": 8,
        "patch": 20,
        "mlp_dim": 128,
        "dropout": 0.2,
        "operator_kind": "query",
        "fa_on": True,
        "enc2_depth": 2,
        "dec_depth": 2,
        "attn_heads": 4,
        "max_channels": 8,
    },
    "pretrain": {
        "epochs": 200,
        "batch": 128,
        "lr": 1e-3,
        "mask_ratio": 0.5,
        "channels": None,
        "fm_on": True,
    },
    "finetune": {
        "epochs": 80,
        "batch": 64,
        "lr": 1e-3,
        "keep_enc2": None,
    },
    "data": {
        "path": None,
        "pretrain_path": None,
        "synth": None,
        "pretrain_synth": None,
    },
    "mismatch": {
        "mode": "dropout",
        "base_channels": None,
        "rows": None,
    },
}

# Sections whose values are free-form dicts validated downstream.
_OPAQUE_KEYS = {("data", "synth"), ("data", "pretrain_synth")}


def _check_keys(raw: dict, defaults: dict, prefix: str = "") -> None:
    for key, value in raw.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {dotted!r}")
        default = defaults[key]
        path = tuple(dotted.split("."))
        if isinstance(default, dict) and path not in _OPAQUE_KEYS:
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be a section")
            _check_keys(value, default, prefix=dotted + ".")


def _merge(defaults: dict, raw: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in raw.items():
        if (
            isinstance(out.get(key), dict)
            and isinstance(value, dict)
            and (key,) not in _OPAQUE_KEYS
        ):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    key, raw_value = item.split("=", 1)
    path = key.strip().split(".")
    if not all(path):
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return path, value


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be an object")
    return raw


def resolve_config(
    raw: dict | None = None,
    overrides: list[str] = (),
    seed: int | None = None,
    output_dir: str | None = None,
) -> dict:
    """Defaults + file + --set overrides + flag overrides, validated."""
    raw = raw or {}
    _check_keys(raw, DEFAULT_CONFIG)
    cfg = _merge(DEFAULT_CONFIG, raw)
    for item in overrides:
        path, value = _parse_override(item)
        node, defaults = cfg, DEFAULT_CONFIG
        for depth, part in enumerate(path[:-1]):
            if tuple(path[: depth + 1]) in _OPAQUE_KEYS:
                raise ConfigError(
                    f"--set cannot reach inside {'.'.join(path[:depth + 1])!r}; "
                    "assign it a whole JSON value instead"
                )
            if not isinstance(defaults.get(part), dict):
                raise ConfigError(f"unknown config key {'.'.join(path)!r}")
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
            defaults = defaults[part]
        leaf = path[-1]
        if leaf not in defaults:
            raise ConfigError(f"unknown config key {'.'.join(path)!r}")
        node[leaf] = value
    if seed is not None:
        cfg["seed"] = int(seed)
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    return cfg


def config_hash(cfg: dict) -> str:
    """Stable short hash of the experiment parameters (output_dir excluded,
    being a location rather than part of the experiment)."""
    hashed = {k: v for k, v in cfg.items() if k != "output_dir"}
    canon = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]

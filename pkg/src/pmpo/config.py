"""Flat YAML run configuration, with command-line overrides layered on top."""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple

import yaml

from ._validation import InvalidInputError
from .toyrl.train import TrainConfig

_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, value: Any):
    kind = _TYPES[key]
    if isinstance(value, (dict, list)):
        raise InvalidInputError(f"config key {key!r} must be a scalar, got {type(value).__name__}")
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise InvalidInputError(f"config key {key!r} expects a boolean, got {value!r}")
    if kind == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise InvalidInputError(f"config key {key!r} expects an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise InvalidInputError(f"config key {key!r} expects an integer, got {value!r}") from None
    if kind == "float":
        if isinstance(value, bool):
            raise InvalidInputError(f"config key {key!r} expects a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise InvalidInputError(f"config key {key!r} expects a number, got {value!r}") from None
    return str(value)


def config_from_mapping(values: Mapping[str, Any], base: Optional[TrainConfig] = None) -> TrainConfig:
    """Apply ``values`` over ``base`` (defaults if omitted). Unknown keys are errors."""
    unknown = [k for k in values if k not in _TYPES]
    if unknown:
        raise InvalidInputError(f"unknown config key {unknown[0]!r}")
    merged = dataclasses.asdict(base or TrainConfig())
    merged.update({k: _coerce(k, v) for k, v in values.items()})
    return TrainConfig(**merged)


def git_blob_hash(data: bytes) -> str:
    """Content hash computed the way ``git hash-object`` does."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def load_config(path) -> Tuple[TrainConfig, str]:
    """Parse a config file; returns the config and the content hash of its bytes."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInputError(f"config file {path} must hold a flat key/value mapping")
    return config_from_mapping(data), git_blob_hash(raw)

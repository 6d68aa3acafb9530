"""Layered pipeline configuration and run manifests.

Precedence, lowest to highest: built-in defaults < BEVCAST_DATA_ROOT
environment variable (dataset root only) < config file < command-line flags.
Config files are flat ``key = value`` text; '#' starts a comment. Manifests
written beside every output are themselves valid config files (the reserved
``command`` and ``input.*`` keys are ignored on load), so a run can be
reproduced directly from its manifest.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .training import TrainConfig

ENV_DATA_ROOT = "BEVCAST_DATA_ROOT"

DEFAULTS: dict[str, str] = {
    "data_root": "data",
    "split_seed": "0",
    "stride": "25",
    "learning_rate": "0.001",
    "batch_size": "1",
    "epochs": "30",
    "train_seed": "0",
    "precision": "float64",
    "grad_clip": "10.0",
    "include_reference": "true",
}

_RESERVED_PREFIXES = ("input.", "run.")
_RESERVED_KEYS = ("command",)


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class PipelineConfig:
    data_root: Path
    split_seed: int
    stride: int
    learning_rate: float
    batch_size: int
    epochs: int
    train_seed: int
    precision: str
    grad_clip: float
    include_reference: bool

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.train_seed,
            grad_clip=self.grad_clip,
            precision=self.precision,
        )

    def as_values(self) -> dict[str, str]:
        return {
            "data_root": str(self.data_root),
            "split_seed": str(self.split_seed),
            "stride": str(self.stride),
            "learning_rate": repr(self.learning_rate),
            "batch_size": str(self.batch_size),
            "epochs": str(self.epochs),
            "train_seed": str(self.train_seed),
            "precision": self.precision,
            "grad_clip": repr(self.grad_clip),
            "include_reference": "true" if self.include_reference else "false",
        }


_CONVERTERS = {
    "data_root": Path,
    "split_seed": int,
    "stride": int,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "train_seed": int,
    "precision": str,
    "grad_clip": float,
    "include_reference": _parse_bool,
}


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file -> string values; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = key.strip(), value.strip()
        if key in _RESERVED_KEYS or any(key.startswith(p) for p in _RESERVED_PREFIXES):
            continue  # manifest bookkeeping keys
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def resolve_config(
    file_values: Mapping[str, str] | None = None,
    flag_values: Mapping[str, str] | None = None,
    env: Mapping[str, str] | None = None,
) -> PipelineConfig:
    env = os.environ if env is None else env
    merged = dict(DEFAULTS)
    if env.get(ENV_DATA_ROOT):
        merged["data_root"] = env[ENV_DATA_ROOT]
    for layer in (file_values, flag_values):
        if layer:
            merged.update({k: v for k, v in layer.items() if v is not None})
    typed = {}
    for key, convert in _CONVERTERS.items():
        try:
            typed[key] = convert(merged[key])
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
    return PipelineConfig(**typed)


def hash_path(path) -> str:
    """sha256 of a file, or of a directory's sorted (relative path, bytes)."""
    path = Path(path)
    digest = hashlib.sha256()
    if path.is_file():
        digest.update(path.read_bytes())
    elif path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(str(child.relative_to(path)).encode())
            digest.update(b"\0")
            digest.update(child.read_bytes())
    else:
        raise ConfigError(f"cannot hash missing input {path}")
    return digest.hexdigest()


def write_manifest(
    out_dir,
    command: str,
    config: PipelineConfig,
    inputs: Mapping[str, Path] | None = None,
    extra: Mapping[str, str] | None = None,
) -> Path:
    """Reproducibility record beside the outputs: command, full config
    snapshot (seeds included), and a content hash per input."""
    lines = [f"command = {command}"]
    values = config.as_values()
    for key in sorted(values):
        lines.append(f"{key} = {values[key]}")
    for key in sorted(extra or {}):
        lines.append(f"run.{key} = {extra[key]}")
    for name in sorted(inputs or {}):
        lines.append(f"input.{name} = {hash_path(inputs[name])}")
    out = Path(out_dir) / "manifest.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    return out

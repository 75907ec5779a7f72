"""Strict experiment configuration: YAML files validated against
per-experiment parameter schemas.

A config file has up to four top-level keys::

    experiment: bifurcation_sweep     # required, one of the registry names
    seed: 123                         # required for stochastic experiments
    out_dir: results/bif              # optional; CLI flag / env var override
    params:                           # optional; schema-checked per experiment
      mu_sq: 1.0

Any unknown key, at either level, is rejected before any computation
starts, with the offending key path in the error.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending key path."""

    def __init__(self, message, key_path=None):
        super().__init__(message)
        self.key_path = key_path


@dataclass(frozen=True)
class Param:
    """One schema entry: expected type, default value, optional choices."""

    kind: type | tuple
    default: object
    help: str = ""
    choices: tuple | None = None


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int | None
    out_dir: Path | None


_TOP_LEVEL_KEYS = {"experiment", "seed", "out_dir", "params"}


def _coerce(name: str, value, spec: Param):
    kinds = spec.kind if isinstance(spec.kind, tuple) else (spec.kind,)
    if float in kinds and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    ok = isinstance(value, kinds)
    if isinstance(value, bool) and bool not in kinds:
        ok = False  # bool is an int subclass; require an explicit bool kind
    if not ok:
        expected = "/".join(k.__name__ for k in kinds)
        raise ConfigError(
            f"params.{name}: expected {expected}, got {type(value).__name__}",
            key_path=f"params.{name}",
        )
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(
            f"params.{name}: {value!r} not in {spec.choices}", key_path=f"params.{name}"
        )
    return value


def validate_params(experiment: str, raw: dict, schema: dict) -> dict:
    """Resolve raw params against a schema: defaults in, unknown keys out."""
    raw = dict(raw or {})
    resolved = {}
    for name, spec in schema.items():
        if name in raw:
            resolved[name] = _coerce(name, raw.pop(name), spec)
        else:
            resolved[name] = spec.default
    if raw:
        key = sorted(raw)[0]
        raise ConfigError(
            f"unknown key 'params.{key}' for experiment {experiment!r}",
            key_path=f"params.{key}",
        )
    return resolved


def load_config(path) -> ExperimentConfig:
    """Parse and structurally validate a config file (schema check happens
    against the experiment registry at run time)."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return config_from_mapping(doc, source=str(path))


def config_from_mapping(doc, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}'", key_path=key)
    if "experiment" not in doc or not isinstance(doc["experiment"], str):
        raise ConfigError("missing or invalid 'experiment'", key_path="experiment")
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("'seed' must be an integer", key_path="seed")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("'params' must be a mapping", key_path="params")
    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("'out_dir' must be a string path", key_path="out_dir")
    return ExperimentConfig(
        experiment=doc["experiment"],
        params=params,
        seed=seed,
        out_dir=Path(out_dir) if out_dir else None,
    )

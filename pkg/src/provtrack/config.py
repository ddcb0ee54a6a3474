"""Declarative configuration for the CLI and the HTTP service.

One JSON file holds the port, the data directory, the simulation knobs and
the determinism switch. Environment variables (PROVTRACK_*) override file
values; explicit flags override both.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .broker import SimConfig
from .errors import SchemaError

ENV_PREFIX = "PROVTRACK_"

_ENV_KEYS = {
    "PORT": ("port", int),
    "DATA_DIR": ("data_dir", str),
    "VIRTUAL_TIME": ("virtual_time", lambda raw: raw.lower() in ("1", "true", "yes")),
    "SEED": ("sim.seed", int),
    "WORKERS": ("sim.workers", int),
    "LATENCY_MIN": ("sim.latency_min", float),
    "LATENCY_MAX": ("sim.latency_max", float),
    "FAILURE_PROBABILITY": ("sim.failure_probability", float),
}


@dataclass(frozen=True)
class AppConfig:
    port: int = 8177
    data_dir: Path = Path("provtrack-data")
    virtual_time: bool = False
    sim: SimConfig = field(default_factory=SimConfig)

    def to_dict(self) -> dict[str, Any]:
        return {
            "port": self.port,
            "data_dir": str(self.data_dir),
            "virtual_time": self.virtual_time,
            "sim": self.sim.to_dict(),
        }


def _merge(base: dict[str, Any], extra: Mapping[str, Any]) -> dict[str, Any]:
    for dotted, value in extra.items():
        if value is None:
            continue
        node = base
        *parents, leaf = dotted.split(".")
        for parent in parents:
            node = node.setdefault(parent, {})
        node[leaf] = value
    return base


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> AppConfig:
    """Resolve configuration with flag > env > file > defaults precedence.

    `overrides` uses the same dotted keys as the env table
    ("port", "sim.seed", ...); None values are ignored so callers can pass
    flag values straight through.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise SchemaError("config file must hold a JSON object")
        raw = loaded
    environment = os.environ if env is None else env
    env_values: dict[str, Any] = {}
    for suffix, (dotted, cast) in _ENV_KEYS.items():
        value = environment.get(ENV_PREFIX + suffix)
        if value is not None:
            try:
                env_values[dotted] = cast(value)
            except ValueError as exc:
                raise SchemaError(f"bad {ENV_PREFIX + suffix}: {value!r}") from exc
    _merge(raw, env_values)
    _merge(raw, overrides or {})
    try:
        sim = SimConfig.from_dict(raw.get("sim", {}))
        return AppConfig(
            port=int(raw.get("port", AppConfig.port)),
            data_dir=Path(raw.get("data_dir", AppConfig.data_dir)),
            virtual_time=bool(raw.get("virtual_time", AppConfig.virtual_time)),
            sim=sim,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad configuration: {exc}") from exc

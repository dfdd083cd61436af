"""Pipeline configuration: ``key = value`` file, overridden by command-line flags."""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from idaug.errors import ConfigError
from idaug.workers import default_jobs


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    criterion: str = "mu-sigma"
    k: Optional[int] = None  # None keeps every candidate background
    exclude_self: bool = True
    reading: str = "distance"
    dilation_radius: int = 5
    inpaint_backend: str = "diffusion"
    inpaint_cmd: Optional[str] = None
    gridmask_d_min: int = 96
    gridmask_d_max: int = 224
    gridmask_ratio: float = 0.6
    gridmask_p: float = 0.7
    hflip_p: float = 0.5
    beta: float = 0.3
    fixed_th: int = 127
    jobs: int = field(default_factory=default_jobs)
    manifest: Optional[str] = None
    out: Optional[str] = None


_TYPES = typing.get_type_hints(PipelineConfig)
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_NONE = {"", "none", "null", "all"}


def _base_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    return (args[0], True) if args else (tp, False)


def coerce(key: str, value: Any, line: Optional[int] = None) -> Any:
    if key not in _TYPES:
        raise ConfigError(f"unknown key {key!r}", key=key, line=line)
    tp, optional = _base_type(_TYPES[key])
    if not isinstance(value, str):
        if isinstance(value, bool) and tp is not bool:
            raise ConfigError(f"{key}: expected {tp.__name__}, got bool", key=key, line=line)
        if value is None and optional:
            return None
        if isinstance(value, tp) or (tp is float and isinstance(value, int)):
            return tp(value)
        raise ConfigError(f"{key}: expected {tp.__name__}, got {type(value).__name__}", key=key, line=line)
    text = value.strip()
    if optional and text.lower() in _NONE:
        return None
    try:
        if tp is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if tp is int:
            return int(text, 0)
        if tp is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {tp.__name__}", key=key, line=line) from None


def read_config_file(path: str | os.PathLike) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"duplicate key {key!r}", key=key, line=lineno)
            values[key] = coerce(key, value, lineno)
    return values


def parse_config(path: Optional[str | os.PathLike] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Defaults, then the file, then ``overrides`` (entries set to ``None`` are ignored)."""
    config = PipelineConfig()
    if path is not None:
        config = replace(config, **read_config_file(path))
    if overrides:
        given = {k: coerce(k, v) for k, v in overrides.items() if v is not None}
        config = replace(config, **given)
    check_config(config)
    return config


def check_config(config: PipelineConfig) -> None:
    if config.seed < 0:
        raise ConfigError("seed must be a non-negative integer", key="seed")
    if config.k is not None and config.k < 1:
        raise ConfigError("k must be >= 1", key="k")
    if config.reading not in ("distance", "similarity"):
        raise ConfigError("reading must be 'distance' or 'similarity'", key="reading")
    if config.inpaint_backend not in ("diffusion", "external"):
        raise ConfigError("inpaint_backend must be 'diffusion' or 'external'", key="inpaint_backend")
    if config.inpaint_backend == "external" and not config.inpaint_cmd:
        raise ConfigError("external inpainting needs inpaint_cmd", key="inpaint_cmd")
    if config.dilation_radius < 0:
        raise ConfigError("dilation_radius must be >= 0", key="dilation_radius")
    if config.jobs < 1:
        raise ConfigError("jobs must be >= 1", key="jobs")
    if config.criterion.replace("-", "_") not in ("mu_sigma", "mu_plus_sigma", "median"):
        raise ConfigError("criterion must be mu-sigma or median", key="criterion")


def config_keys() -> list[str]:
    return [f.name for f in fields(PipelineConfig)]

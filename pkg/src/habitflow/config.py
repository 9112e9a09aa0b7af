"""Run configuration: defaults < key-value file < HABITFLOW_* environment < command-line flags."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Any, Mapping

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "k": 5,
    "search_steps": 1000,
    "inner_rotation": "single",
    "model_types": "survey,past_behavior,theory,combined",
    "study_mode": "study2",
    "target_session": "evening",
    "activity_threshold": 0.08,
    "min_duration": 30.0,
    "merge_gap": 10.0,
    "timezone": "UTC",
    "l2_penalty": 1e-6,
    "max_iterations": 500,
    "convergence_tol": 1e-8,
    "standardize": True,
}

ENV_PREFIX = "HABITFLOW_"


def _coerce(key: str, raw: Any, template: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(template, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    return text


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def resolve(
    config_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
    defaults: Mapping[str, Any] = DEFAULTS,
) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    resolved = dict(defaults)
    layers = []
    if config_path is not None:
        layers.append(parse_key_values(Path(config_path).read_text(), str(config_path)))
    layers.append(
        {k[len(ENV_PREFIX) :].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}
    )
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in defaults:
                continue
            resolved[key] = _coerce(key, value, defaults[key])
    return resolved


def dump(config: Mapping[str, Any]) -> str:
    return "".join(f"{key} = {config[key]}\n" for key in sorted(config))


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(dump(config).encode()).hexdigest()

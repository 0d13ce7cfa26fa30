"""Config files for the CLI: TOML or JSON, one section per pipeline stage.

A config is a flat two-level mapping, section name to option table. CLI
flags override file values; every subcommand resolves its options through
``section()`` so the precedence is identical everywhere.
"""

import json
from pathlib import Path

import tomli

KNOWN_SECTIONS = frozenset({
    "align", "metrics", "vocab", "split", "session", "store", "serve",
})


class ConfigError(ValueError):
    """Unreadable or structurally invalid config file."""


def load_config(path: str | Path | None) -> dict:
    """Parse a TOML (default) or JSON (by suffix) config into a dict."""
    if path is None:
        return {}
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomli.loads(raw.decode("utf-8"))
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    for name, value in data.items():
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: section [{name}] must be a table")
    return data


def section(config: dict, name: str, overrides: dict | None = None) -> dict:
    """Merge one config section with CLI overrides (None values ignored)."""
    merged = dict(config.get(name, {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return merged

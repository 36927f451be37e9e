"""Flat key=value run configuration with typed parsing.

A config is a plain UTF-8 text file of ``key = value`` lines ('#'
comments and blank lines allowed).  Each subcommand declares a schema
(key -> Field); resolution layers file values and command-line
overrides on top of the declared defaults, rejects unknown keys, and
returns a plain dict.  Every run writes its resolved config next to
its outputs so the run directory is self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, FormatError, IoError

REQUIRED = object()

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass(frozen=True)
class Field:
    """One typed config key: python type, default (REQUIRED if none)."""

    type: type
    default: object = REQUIRED
    help: str = ""


def parse_value(name: str, ftype: type, raw: str):
    raw = raw.strip()
    try:
        if ftype is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if ftype is int:
            return int(raw, 0)
        if ftype is float:
            return float(raw)
        if ftype is str:
            return raw
    except ValueError:
        raise ConfigError(
            f"config key {name!r}: cannot parse {raw!r} as {ftype.__name__}"
        ) from None
    raise ConfigError(f"config key {name!r} has unsupported type {ftype!r}")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_file(path) -> dict[str, str]:
    """Raw key -> string-value pairs from a config file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read config file {path}: {e}") from e
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(
                f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        if key in out:
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = raw.strip()
    return out


def resolve(schema: dict[str, Field], file_path=None,
            overrides: dict[str, str] | None = None) -> dict:
    """Defaults <- file <- overrides, typed, with unknown keys rejected."""
    raw: dict[str, str] = {}
    if file_path is not None:
        raw.update(load_file(file_path))
    raw.update(overrides or {})

    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}")

    out: dict = {}
    for key, field in schema.items():
        if key in raw:
            out[key] = parse_value(key, field.type, raw[key])
        elif field.default is REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        else:
            out[key] = field.default
    return out


def write_resolved(cfg: dict, path) -> None:
    lines = [f"{k} = {format_value(v)}" for k, v in sorted(cfg.items())]
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write resolved config {path}: {e}") from e

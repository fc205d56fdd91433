"""Flat TOML-style ``key = value`` configuration files.

Supported value forms: booleans (``true``/``false``), integers, floats,
``inf``, quoted or bare strings, and comma-separated lists of any of
those. Keys are dotted paths (``bm25.k1``); the parser keeps them flat.
"""

from __future__ import annotations

import math

from .errors import ConfigError

_BOOLEANS = {"true": True, "false": False}


def _parse_scalar(token: str):
    token = token.strip()
    if not token:
        raise ConfigError("empty value")
    if len(token) >= 2 and token[0] == token[-1] and token[0] in ("'", '"'):
        return token[1:-1]
    low = token.lower()
    if low in _BOOLEANS:
        return _BOOLEANS[low]
    if low == "inf":
        return math.inf
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        rhs = rhs.strip()
        if "," in rhs:
            values[key] = [_parse_scalar(part) for part in rhs.split(",") if part.strip()]
        else:
            values[key] = _parse_scalar(rhs)
    return values


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return parse_config_text(handle.read(), source=str(path))


def get(cfg: dict, key: str, default=None):
    return cfg.get(key, default)


def as_list(value) -> list:
    """Normalize a scalar-or-list config value to a list."""
    if value is None:
        return []
    if isinstance(value, list):
        return value
    return [value]

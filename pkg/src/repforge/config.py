"""Flat key-value configuration files and seed derivation.

Config files are plain text, one ``key = value`` per line, ``#`` starts a
comment. Keys are dotted (``dsp.cutoff_hz``); values stay strings until a
consumer asks for a typed view.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_kv(path: str | os.PathLike) -> dict[str, str]:
    return parse_kv(Path(path).read_text())


def dump_kv(values: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(values.items()))


class Config(dict):
    """``dict[str, str]`` with typed getters."""

    @classmethod
    def from_file(cls, path) -> "Config":
        return cls(load_kv(path))

    def get_float(self, key: str, default: float | None = None) -> float:
        if key not in self:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return float(self[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: not a number: {self[key]!r}") from exc

    def get_int(self, key: str, default: int | None = None) -> int:
        if key not in self:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return int(self[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: not an integer: {self[key]!r}") from exc

    def get_str(self, key: str, default: str | None = None) -> str:
        if key not in self:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        return self[key]

    def get_bool(self, key: str, default: bool = False) -> bool:
        if key not in self:
            return default
        v = self[key].lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {self[key]!r}")

    def section(self, prefix: str) -> "Config":
        p = prefix.rstrip(".") + "."
        return Config({k[len(p):]: v for k, v in self.items() if k.startswith(p)})

    def digest(self) -> str:
        return config_hash(self)


def config_hash(values: dict) -> str:
    blob = dump_kv({k: values[k] for k in values}).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(master: int, *path: str | int) -> int:
    """Child seed for a named node of the seed tree.

    ``derive_seed(7, "evaluate", "fold", 2)`` is stable across runs and
    platforms; sibling names give independent streams.
    """
    h = hashlib.sha256(str(int(master)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:4], "little")


def rng_for(master: int, *path: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *path))


def n_workers() -> int:
    """Worker cap from ``REPFORGE_THREADS`` (default 1)."""
    raw = os.environ.get("REPFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1

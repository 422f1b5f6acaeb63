"""Layered plain-text configuration.

A config file holds ``key = value`` lines. Keys are field names of
:class:`~diffnav.runner.ScenarioConfig`; nested settings use dotted names
(``mpc.horizon = 20``, ``dwa.weights = 0.8, 0.2, 0.2``) or a ``[section]``
header followed by bare keys. ``#`` starts a comment. Later layers override
earlier ones and every value is coerced to the type of the field it sets.
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from pathlib import Path

from .ekf import EkfConfig
from .runner import ScenarioConfig


class ConfigError(ValueError):
    """Unknown key or a value that does not fit its field."""


def parse_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Flat ``{dotted_key: raw_value}`` mapping of one layer."""
    out: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[f"{section}.{key}" if section else key] = value
    return out


def parse_file(path) -> dict[str, str]:
    return parse_text(Path(path).read_text(), str(path))


def parse_overrides(items) -> dict[str, str]:
    """``["mpc.horizon=10", ...]`` as a layer."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _unwrap_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def coerce(raw: str, tp):
    """Convert ``raw`` to the annotated type ``tp``."""
    tp, optional = _unwrap_optional(tp)
    text = raw.strip()
    if optional and text.lower() in ("none", "null", ""):
        return None
    origin = typing.get_origin(tp)
    if origin is tuple:
        args = typing.get_args(tp)
        parts = [p for p in text.strip("()[]").split(",") if p.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(coerce(p, args[0]) for p in parts)
        if len(parts) != len(args):
            raise ConfigError(f"expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(coerce(p, a) for p, a in zip(parts, args))
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if tp is int:
        try:
            return int(text, 0)
        except ValueError:
            raise ConfigError(f"not an integer: {raw!r}") from None
    if tp is float:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}") from None
        if math.isnan(value):
            raise ConfigError("NaN is not a valid setting")
        return value
    if tp is str:
        return text.strip("\"'")
    raise ConfigError(f"unsupported field type {tp!r}")


def _apply(obj, dotted: dict[str, str], prefix: str = ""):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    nested: dict[str, dict[str, str]] = {}
    changes = {}
    for key, raw in dotted.items():
        head, _, rest = key.partition(".")
        if head not in names:
            raise ConfigError(f"unknown setting {prefix + head!r}")
        if rest:
            nested.setdefault(head, {})[rest] = raw
        else:
            try:
                changes[head] = coerce(raw, hints[head])
            except ConfigError as exc:
                raise ConfigError(f"{prefix + head}: {exc}") from None
    for head, sub in nested.items():
        child = changes.get(head, getattr(obj, head))
        if child is None and head == "ekf":
            child = EkfConfig.from_noise(changes.get("noise", obj.noise))
        if not dataclasses.is_dataclass(child):
            raise ConfigError(f"{prefix + head!r} has no sub-settings")
        changes[head] = _apply(child, sub, f"{prefix}{head}.")
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from None


def apply_layers(base: ScenarioConfig, *layers: dict[str, str]) -> ScenarioConfig:
    """Merge layers left to right (later wins) and apply them to ``base``."""
    merged: dict[str, str] = {}
    for layer in layers:
        merged.update(layer)
    return _apply(base, merged)


def load_config(paths=(), overrides=(), base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Defaults, then each file in ``paths``, then ``key=value`` ``overrides``."""
    layers = [parse_file(p) for p in paths]
    layers.append(parse_overrides(overrides))
    return apply_layers(base or ScenarioConfig(), *layers)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_config(cfg) -> str:
    """Round-trippable text form: top-level keys first, then one section per sub-config."""
    top, sections = [], []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            lines = [f"[{f.name}]"] + [f"{g.name} = {_format(getattr(value, g.name))}"
                                       for g in dataclasses.fields(value)]
            sections.append("\n".join(lines))
        else:
            top.append(f"{f.name} = {_format(value)}")
    return "\n\n".join(["\n".join(top)] + sections) + "\n"

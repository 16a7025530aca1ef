"""Dataclass <-> plain-data conversion for config files and checkpoint metadata.

to_plain turns nested (frozen) dataclasses into JSON/YAML-safe dicts, lists,
and scalars; from_plain rebuilds them, rejecting unknown keys with the full
key path so config typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from typing import Any, Union

_UNION_TYPES = (Union, types.UnionType)


class ConfigError(ValueError):
    """Malformed configuration data (unknown key, wrong type, bad structure)."""


def to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise ConfigError(f"cannot serialize {type(obj).__name__} into config data")


def _is_optional(tp) -> bool:
    return typing.get_origin(tp) in _UNION_TYPES and type(None) in typing.get_args(tp)


def _optional_inner(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    if len(args) != 1:
        raise ConfigError(f"unsupported union type {tp}")
    return args[0]


def _coerce(tp, value, path: str):
    if _is_optional(tp):
        if value is None:
            return None
        return _coerce(_optional_inner(tp), value, path)
    if dataclasses.is_dataclass(tp):
        return from_plain(tp, value, path)
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a sequence, got {type(value).__name__}")
        args = typing.get_args(tp)
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            items = [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
        elif origin is tuple:
            if len(value) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} items, got {len(value)}")
            items = [_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value))]
        else:
            items = [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is Any:
        return value
    raise ConfigError(f"{path}: unsupported config field type {tp}")


def from_plain(cls, data: Any, path: str = "config"):
    """Build dataclass cls from nested plain data, rejecting unknown keys."""
    if not dataclasses.is_dataclass(cls):
        raise ConfigError(f"{path}: {cls!r} is not a dataclass")
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - field_names
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}; valid: {sorted(field_names)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], f"{path}.{f.name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

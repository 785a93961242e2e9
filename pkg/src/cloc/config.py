"""Flat ``key = value`` config files mapped onto dataclass configs."""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any, Mapping, TypeVar

T = TypeVar("T")

_SECTION = "config"


def read_config_file(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str  # keep key case
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string(f"[{_SECTION}]\n{text}")
    return {k.strip().replace("-", "_"): v.strip() for k, v in parser.items(_SECTION)}


def _convert(value: Any, typ: Any) -> Any:
    if not isinstance(value, str):
        return value
    name = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    if name == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if name == "int":
        return int(value)
    if name == "float":
        return float(value)
    return value


def field_names(*classes: type) -> set[str]:
    return {f.name for cls in classes for f in dataclasses.fields(cls)}


def build(cls: type[T], values: Mapping[str, Any], base: T | None = None) -> T:
    """Instantiate ``cls`` from the subset of ``values`` naming its fields."""
    kwargs = dataclasses.asdict(base) if base is not None else {}
    for f in dataclasses.fields(cls):
        if f.name in values and values[f.name] is not None:
            kwargs[f.name] = _convert(values[f.name], f.type)
    return cls(**kwargs)

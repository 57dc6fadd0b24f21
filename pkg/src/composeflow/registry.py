"""Runtime table of implementations keyed by (implementation key, unit path).

Composition decides which unit provides each key; this table maps that
choice to Python callables. A key with no binding in the manifest has no
callable, so the corresponding operation is skipped.
"""
from __future__ import annotations

from typing import Callable


class MissingImplementation(LookupError):
    pass


_TABLE: dict[tuple[str, str], Callable] = {}


def implements(key: str, unit: str):
    def deco(fn):
        if (key, unit) in _TABLE and _TABLE[(key, unit)] is not fn:
            raise ValueError(f"{key} is already implemented for {unit}")
        _TABLE[(key, unit)] = fn
        return fn
    return deco


def lookup(manifest, key: str, required: bool = False) -> Callable | None:
    unit = manifest.binding(key)
    if unit is None:
        if required:
            raise MissingImplementation(f"no unit provides {key!r}")
        return None
    # walk up from the bound node: deeper registrations win, as in composition
    path = unit
    while path:
        fn = _TABLE.get((key, path))
        if fn is not None:
            return fn
        path = path.rpartition("/")[0]
    raise MissingImplementation(f"{unit} is bound to {key!r} but nothing implements it")


def registered() -> dict[tuple[str, str], Callable]:
    return dict(_TABLE)

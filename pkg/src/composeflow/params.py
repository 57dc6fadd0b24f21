"""Runtime parameters: declarations, parfiles, validation and TOML to parfile generation."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

TYPES = ("REAL", "INTEGER", "STRING", "BOOLEAN")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


class ParameterError(ValueError):
    pass


class UnknownParameter(ParameterError):
    pass


class TypeMismatch(ParameterError):
    pass


class ParfileSyntaxError(ParameterError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class WrongUnit(ParameterError):
    pass


class UnknownUnit(ParameterError):
    pass


@dataclass(frozen=True)
class ParameterDecl:
    name: str
    type: str
    default: object
    owning_unit: str = ""
    comment: str = ""

    def __post_init__(self):
        if self.type not in TYPES:
            raise ParameterError(f"unknown parameter type {self.type!r}")
        object.__setattr__(self, "default", coerce(self.default, self.type, self.name))


# -- literals ---------------------------------------------------------------

def scan_string(text: str, pos: int) -> tuple[str, int]:
    """Read a double-quoted literal starting at ``text[pos] == '"'``."""
    out = []
    i = pos + 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ValueError("unterminated string")


def split_comment(text: str) -> tuple[str, str]:
    """Split ``text`` at the first ``#`` that is not inside a string."""
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == '"':
            _, i = scan_string(text, i)
            continue
        if ch == "#":
            return text[:i].rstrip(), text[i + 1:].strip()
        i += 1
    return text.rstrip(), ""


def parse_literal(text: str):
    """Parse a parfile/DSL literal into a Python value (untyped)."""
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if text[0] == '"':
        value, end = scan_string(text, 0)
        if text[end:].strip():
            raise ValueError(f"trailing characters after string: {text[end:]!r}")
        return value
    low = text.lower()
    if low in ("true", ".true."):
        return True
    if low in ("false", ".false."):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse literal {text!r}") from None


def coerce(value, ptype: str, name: str = "?"):
    """Check ``value`` against a declared type; only INTEGER -> REAL is converted."""
    if ptype == "REAL":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(f"{name}: expected REAL, got {value!r}")
        return float(value)
    if ptype == "INTEGER":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(f"{name}: expected INTEGER, got {value!r}")
        return int(value)
    if ptype == "BOOLEAN":
        if not isinstance(value, bool):
            raise TypeMismatch(f"{name}: expected BOOLEAN, got {value!r}")
        return value
    if ptype == "STRING":
        if not isinstance(value, str):
            raise TypeMismatch(f"{name}: expected STRING, got {value!r}")
        return value
    raise ParameterError(f"unknown type {ptype}")


def format_value(value, ptype: str) -> str:
    if ptype == "REAL":
        return repr(float(value))
    if ptype == "INTEGER":
        return str(int(value))
    if ptype == "BOOLEAN":
        return "true" if value else "false"
    escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


# -- parfiles ---------------------------------------------------------------

@dataclass
class RawParfile:
    values: dict
    warnings: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def __contains__(self, key):
        return key in self.values

    def __len__(self):
        return len(self.values)


def parse_parfile(text: str) -> RawParfile:
    """Parse ``name = literal`` lines. Later duplicates win, with a warning."""
    values: dict = {}
    warnings = []
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            body, _ = split_comment(line)
        except ValueError as exc:
            raise ParfileSyntaxError(lineno, str(exc)) from None
        if not body.strip():
            continue
        if "=" not in body:
            raise ParfileSyntaxError(lineno, f"expected 'name = value', got {line.strip()!r}")
        name, _, literal = body.partition("=")
        name = name.strip()
        if not _NAME.match(name):
            raise ParfileSyntaxError(lineno, f"bad parameter name {name!r}")
        try:
            value = parse_literal(literal)
        except ValueError as exc:
            raise ParfileSyntaxError(lineno, str(exc)) from None
        if name in values:
            msg = f"line {lineno}: duplicate parameter {name} overrides earlier value"
            warnings.append(msg)
            logger.warning(msg)
        values[name] = value
    return RawParfile(values, warnings)


class ParameterSet(Mapping):
    """Validated, fully-populated runtime parameters."""

    def __init__(self, values: dict, explicit: Iterable[str] = (), source: str = ""):
        self._values = dict(values)
        self.explicit = frozenset(explicit)
        self.source = source

    def __getitem__(self, key):
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def replace(self, **changes) -> "ParameterSet":
        vals = dict(self._values)
        for k, v in changes.items():
            if k not in vals:
                raise UnknownParameter(k)
            vals[k] = type(vals[k])(v) if not isinstance(vals[k], bool) else bool(v)
        return ParameterSet(vals, self.explicit | set(changes), self.source)

    def __repr__(self):
        return f"ParameterSet({len(self)} values, source={self.source!r})"


def _schema_map(schema) -> dict:
    if isinstance(schema, Mapping):
        return dict(schema)
    return {d.name: d for d in schema}


def validate(raw, schema, source: str = "") -> ParameterSet:
    """Check names and types against ``schema``; missing names take declared defaults."""
    decls = _schema_map(schema)
    given = raw.values if isinstance(raw, RawParfile) else dict(raw)
    values = {}
    for name, value in given.items():
        decl = decls.get(name)
        if decl is None:
            raise UnknownParameter(f"unknown parameter {name!r}")
        values[name] = coerce(value, decl.type, name)
    explicit = set(values)
    for name, decl in decls.items():
        values.setdefault(name, decl.default)
    return ParameterSet(values, explicit, source)


# -- TOML -> parfile ----------------------------------------------------------

_CONTAINERS = {"physics", "numericalTools", "sourceTerms"}


def unit_name(path: str) -> str:
    """Short unit name used as a TOML table: ``physics/IncompNS/...`` -> ``IncompNS``."""
    for part in path.split("/"):
        if part and part not in _CONTAINERS:
            return part
    return path


def generate_parfile(toml_text: str, schema, unit_order: Iterable[str] | None = None) -> bytes:
    """Render TOML tables of per-unit parameters as a parfile.

    Output groups parameters under ``# <Unit>`` headers, units in
    ``unit_order`` (manifest order), keys sorted within a unit. Every unit
    owning parameters gets a header even when the TOML leaves it empty.
    """
    decls = _schema_map(schema)
    doc = tomllib.loads(toml_text)
    owners: dict[str, list[str]] = {}
    order: list[str] = []
    if unit_order is not None:
        for path in unit_order:
            u = unit_name(path)
            if u not in order:
                order.append(u)
    for name, decl in decls.items():
        u = unit_name(decl.owning_unit)
        owners.setdefault(u, []).append(name)
        if u not in order:
            order.append(u)
    chosen: dict[str, dict[str, str]] = {u: {} for u in order}
    for table, entries in doc.items():
        if table not in owners:
            raise UnknownUnit(f"TOML table [{table}] does not name a unit owning parameters")
        if not isinstance(entries, dict):
            raise ParameterError(f"[{table}] must be a table")
        for key, value in entries.items():
            decl = decls.get(key)
            if decl is None:
                raise UnknownParameter(f"[{table}] {key}: unknown parameter")
            owner = unit_name(decl.owning_unit)
            if owner != table:
                raise WrongUnit(f"{key} belongs under [{owner}], not [{table}]")
            if isinstance(value, (dict, list)):
                raise ParameterError(f"{key}: only scalar values are supported")
            chosen[table][key] = format_value(coerce(value, decl.type, key), decl.type)
    lines = []
    for u in order:
        if u not in owners:
            continue
        if lines:
            lines.append("")
        lines.append(f"# {u}")
        for key in sorted(chosen[u]):
            lines.append(f"{key} = {chosen[u][key]}")
    return ("\n".join(lines) + "\n").encode()


def toml_values(toml_text: str, schema) -> dict:
    """Flatten TOML unit tables to ``name -> value`` (direct ingestion path)."""
    doc = tomllib.loads(toml_text)
    out = {}
    for entries in doc.values():
        out.update(entries)
    return out

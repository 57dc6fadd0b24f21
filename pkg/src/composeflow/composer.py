"""Unit-tree composition.

A unit tree is a directory hierarchy. Each node holds a ``Config`` file in
a small line-oriented DSL and zero or more ``<key>.impl`` marker files, the
implementation keys the node provides. Selecting a node selects its
ancestors; along any selected path a deeper node's implementation of a key
replaces its ancestor's. :func:`resolve` turns a :class:`SetupRequest` into
a :class:`SimulationManifest`.
"""
from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from composeflow.params import (
    TYPES,
    ParameterDecl,
    format_value,
    parse_literal,
    scan_string,
    split_comment,
)

APP_ROOT = "Simulation/SimulationMain"
_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")
_PARAM_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_CENTERINGS = ("CENTER", "FACEX", "FACEY", "FACEZ")


class CompositionError(Exception):
    pass


class ConfigSyntaxError(CompositionError):
    def __init__(self, lineno, message, source=""):
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{lineno}: {message}")
        self.lineno = lineno


class ExclusivityViolation(CompositionError):
    pass


class MissingDependency(CompositionError):
    pass


class UnknownApplication(CompositionError):
    pass


class DuplicateParameter(CompositionError):
    pass


class UnknownShortcut(CompositionError):
    pass


@dataclass(frozen=True)
class VariableDecl:
    name: str
    centering: str
    owning_unit: str = ""


@dataclass(frozen=True)
class ConfigSpec:
    defaults: tuple[str, ...] = ()
    requires: tuple[str, ...] = ()
    exclusive_groups: tuple[tuple[str, ...], ...] = ()
    parameters: tuple[ParameterDecl, ...] = ()
    variables: tuple[VariableDecl, ...] = ()


def _tokens(body: str) -> list[str]:
    """Whitespace split that keeps double-quoted strings (quotes included) whole."""
    out = []
    i = 0
    while i < len(body):
        if body[i].isspace():
            i += 1
            continue
        if body[i] == '"':
            _, end = scan_string(body, i)
            out.append(body[i:end])
            i = end
            continue
        j = i
        while j < len(body) and not body[j].isspace():
            j += 1
        out.append(body[i:j])
        i = j
    return out


def parse_config(text: str, unit: str = "", source: str = "") -> ConfigSpec:
    """Parse one ``Config`` file."""
    defaults, requires, groups, params, variables = [], [], [], [], []
    seen_params = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            body, comment = split_comment(line)
            toks = _tokens(body)
        except ValueError as exc:
            raise ConfigSyntaxError(lineno, str(exc), source) from None
        if not toks:
            continue
        kw, args = toks[0], toks[1:]

        def fail(msg):
            raise ConfigSyntaxError(lineno, msg, source)

        if kw == "DEFAULT":
            if len(args) != 1 or not _IDENT.match(args[0]):
                fail("DEFAULT takes one child name")
            defaults.append(args[0])
        elif kw == "REQUIRES":
            if len(args) != 1:
                fail("REQUIRES takes one unit path")
            path = args[0].strip("/")
            if not path or not all(_IDENT.match(p) for p in path.split("/")):
                fail(f"bad unit path {args[0]!r}")
            requires.append(path)
        elif kw == "EXCLUSIVE":
            if len(args) < 2:
                fail("EXCLUSIVE needs at least two names")
            if len(set(args)) != len(args):
                fail("EXCLUSIVE names must be distinct")
            for a in args:
                if not _IDENT.match(a):
                    fail(f"bad child name {a!r}")
            groups.append(tuple(args))
        elif kw == "PARAMETER":
            if len(args) != 3:
                fail("PARAMETER takes <name> <type> <default>")
            name, ptype, lit = args
            if not _PARAM_NAME.match(name):
                fail(f"bad parameter name {name!r}")
            if ptype not in TYPES:
                fail(f"unknown parameter type {ptype!r}")
            if name in seen_params:
                fail(f"duplicate PARAMETER {name}")
            try:
                decl = ParameterDecl(name, ptype, parse_literal(lit), unit, comment)
            except ValueError as exc:
                fail(f"bad default for {name}: {exc}")
            seen_params.add(name)
            params.append(decl)
        elif kw == "VARIABLE":
            if len(args) != 2:
                fail("VARIABLE takes <name> <centering>")
            if not _PARAM_NAME.match(args[0]):
                fail(f"bad variable name {args[0]!r}")
            if args[1] not in _CENTERINGS:
                fail(f"unknown centering {args[1]!r}")
            variables.append(VariableDecl(args[0], args[1], unit))
        else:
            fail(f"unknown keyword {kw!r}")
    return ConfigSpec(tuple(defaults), tuple(requires), tuple(groups), tuple(params), tuple(variables))


@dataclass(frozen=True)
class UnitNode:
    path: str
    config: ConfigSpec
    implementations: frozenset = frozenset()
    config_text: str = ""
    source_dir: Path | None = None

    def __post_init__(self):
        for key in self.implementations:
            if not _IDENT.match(key):
                raise CompositionError(f"{self.path}: bad implementation key {key!r}")

    @property
    def name(self) -> str:
        return self.path.rsplit("/", 1)[-1]

    @property
    def parent(self) -> str:
        return self.path.rsplit("/", 1)[0] if "/" in self.path else ""


def parse_shortcut_table(text: str) -> dict[str, tuple[str, ...]]:
    """Lines of ``name token [token ...]``; tokens are unit paths or ``-flag[=value]``."""
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if len(body) < 2:
            raise ConfigSyntaxError(lineno, "shortcut needs a name and at least one token", "shortcuts")
        table[body[0]] = tuple(body[1:])
    return table


def _sibling_key(name: str):
    # *Main nodes first, then alphabetical
    return (0 if name.endswith("Main") else 1, name)


class UnitTree:
    def __init__(self, nodes: Iterable[UnitNode], shortcuts: Mapping[str, tuple[str, ...]] | None = None,
                 root: Path | None = None):
        self.nodes: dict[str, UnitNode] = {}
        for n in nodes:
            if n.path in self.nodes:
                raise CompositionError(f"duplicate unit path {n.path}")
            self.nodes[n.path] = n
        if "" not in self.nodes:
            self.nodes[""] = UnitNode("", ConfigSpec())
        for path in self.nodes:
            if path and self._parent(path) not in self.nodes:
                raise CompositionError(f"unit {path} has no parent node")
        self._children: dict[str, list[str]] = {p: [] for p in self.nodes}
        for path in self.nodes:
            if path:
                self._children[self._parent(path)].append(path)
        for kids in self._children.values():
            kids.sort(key=lambda p: _sibling_key(p.rsplit("/", 1)[-1]))
        self.shortcuts = dict(shortcuts or {})
        self.root = root
        self._hash = None

    @staticmethod
    def _parent(path):
        return path.rsplit("/", 1)[0] if "/" in path else ""

    def __contains__(self, path) -> bool:
        return path in self.nodes

    def __getitem__(self, path) -> UnitNode:
        return self.nodes[path]

    def children(self, path: str) -> list[str]:
        return self._children[path]

    @property
    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            for path in sorted(self.nodes):
                node = self.nodes[path]
                h.update(f"node {path}\n".encode())
                h.update(node.config_text.encode())
                h.update(("\nimpl " + " ".join(sorted(node.implementations)) + "\n").encode())
            for name in sorted(self.shortcuts):
                h.update(f"shortcut {name} {' '.join(self.shortcuts[name])}\n".encode())
            self._hash = h.hexdigest()
        return self._hash

    @classmethod
    def from_mapping(cls, spec: Mapping[str, tuple[str, Iterable[str]]], shortcuts=None) -> "UnitTree":
        """Build from ``{path: (config_text, implementation_keys)}``; missing ancestors get empty nodes."""
        nodes = {}
        for path, (text, impls) in spec.items():
            path = path.strip("/")
            nodes[path] = UnitNode(path, parse_config(text, path, path or "<root>"), frozenset(impls), text)
        for path in list(nodes):
            parts = path.split("/")
            for i in range(1, len(parts)):
                anc = "/".join(parts[:i])
                nodes.setdefault(anc, UnitNode(anc, ConfigSpec()))
        return cls(nodes.values(), shortcuts)

    @classmethod
    def from_directory(cls, root: str | os.PathLike) -> "UnitTree":
        root = Path(root)
        nodes = []
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames[:] = sorted(d for d in dirnames if not d.startswith((".", "__")) and d != "tests")
            rel = Path(dirpath).relative_to(root).as_posix()
            path = "" if rel == "." else rel
            cfg = Path(dirpath) / "Config"
            text = cfg.read_text(encoding="utf-8") if cfg.exists() else ""
            impls = frozenset(f[:-5] for f in filenames if f.endswith(".impl"))
            nodes.append(UnitNode(path, parse_config(text, path, str(cfg)), impls, text, Path(dirpath)))
        table = root / "shortcuts.txt"
        shortcuts = parse_shortcut_table(table.read_text(encoding="utf-8")) if table.exists() else {}
        return cls(nodes, shortcuts, root)


# -- request ---------------------------------------------------------------

@dataclass(frozen=True)
class SetupRequest:
    application: str
    dims: int | None = None
    nxb: int | None = None
    nyb: int | None = None
    nzb: int | None = None
    maxblocks: int | None = None
    auto: bool = False
    site: str | None = None
    shortcuts: tuple[str, ...] = ()
    units: tuple[str, ...] = ()

    def echo(self) -> str:
        parts = [self.application]
        if self.auto:
            parts.append("-auto")
        if self.dims is not None:
            parts.append(f"-{self.dims}d")
        for name in ("nxb", "nyb", "nzb", "maxblocks"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"-{name}={v}")
        if self.site is not None:
            parts.append(f"-site={self.site}")
        parts.extend(f"-with-unit={u}" for u in self.units)
        parts.extend(f"+{s}" for s in self.shortcuts)
        return " ".join(parts)


_FLAG = re.compile(r"-(nxb|nyb|nzb|maxblocks)=(\d+)$")


def _apply_flag(tok: str, out: dict):
    """Apply one ``-flag`` token to ``out``; returns False if unrecognised."""
    if tok == "-auto":
        out["auto"] = True
    elif tok in ("-1d", "-2d", "-3d"):
        out["dims"] = int(tok[1])
    elif tok.startswith("-site="):
        out["site"] = tok.split("=", 1)[1]
    elif tok.startswith(("-with-unit=", "--with-unit=")):
        out.setdefault("units", []).append(tok.split("=", 1)[1].strip("/"))
    else:
        m = _FLAG.match(tok)
        if not m:
            return False
        out[m.group(1)] = int(m.group(2))
    return True


def parse_setup_args(args: Iterable[str]) -> SetupRequest:
    """``<app> [-auto] [-2d|-3d] [-nxb=N ...] [-maxblocks=N] [-site=NAME] [+shortcut ...]``"""
    args = list(args)
    if not args or args[0].startswith(("-", "+")):
        raise CompositionError("setup needs an application path first")
    fields: dict = {}
    shortcuts = []
    for tok in args[1:]:
        if tok.startswith("+"):
            if tok[1:] not in shortcuts:
                shortcuts.append(tok[1:])
        elif not _apply_flag(tok, fields):
            raise CompositionError(f"unknown setup option {tok!r}")
    units = tuple(fields.pop("units", ()))
    return SetupRequest(args[0].strip("/"), shortcuts=tuple(shortcuts), units=units, **fields)


@dataclass(frozen=True)
class ShortcutExpansion:
    units: frozenset = frozenset()
    flags: Mapping = field(default_factory=dict)


def expand_shortcuts(tokens: Iterable[str], table: Mapping[str, Iterable[str]]) -> ShortcutExpansion:
    units = set()
    flags: dict = {}
    for tok in tokens:
        name = tok[1:] if tok.startswith("+") else tok
        if name not in table:
            raise UnknownShortcut(f"unknown shortcut +{name}")
        for item in table[name]:
            if item.startswith("-"):
                if not _apply_flag(item, flags):
                    raise CompositionError(f"shortcut +{name}: bad flag {item!r}")
                units.update(flags.pop("units", ()))
            else:
                units.add(item.strip("/"))
    return ShortcutExpansion(frozenset(units), flags)


# -- manifest --------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    dims: int
    nxb: int
    nyb: int
    nzb: int
    maxblocks: int

    @property
    def ncells(self) -> tuple[int, ...]:
        return (self.nxb, self.nyb, self.nzb)[: self.dims]


@dataclass(frozen=True)
class SimulationManifest:
    resolved_units: tuple[str, ...]
    implementation_bindings: Mapping[str, str]
    parameter_schema: tuple[ParameterDecl, ...]
    field_registry: tuple[VariableDecl, ...]
    geometry: Geometry
    request: str
    tree_hash: str
    site: str = ""

    @property
    def application(self) -> str:
        return self.request.split()[0]

    def schema(self) -> dict[str, ParameterDecl]:
        return {d.name: d for d in self.parameter_schema}

    def has_unit(self, path: str) -> bool:
        return path in self.resolved_units

    def binding(self, key: str) -> str | None:
        return self.implementation_bindings.get(key)


def _validate_geometry(g: Geometry):
    if g.dims not in (2, 3):
        raise CompositionError(f"dimensionality must be 2 or 3, got {g.dims}")
    if g.nxb < 4 or g.nyb < 4:
        raise CompositionError("nxb and nyb must be at least 4")
    if g.dims == 3 and g.nzb < 4:
        raise CompositionError("nzb must be at least 4 in 3-D")
    if g.dims == 2 and g.nzb != 1:
        raise CompositionError("nzb must be 1 in 2-D")
    if g.maxblocks < 1:
        raise CompositionError("maxblocks must be positive")


def resolve(tree: UnitTree, request: SetupRequest) -> SimulationManifest:
    app = f"{APP_ROOT}/{request.application}"
    if app not in tree:
        raise UnknownApplication(f"no application {request.application!r} under {APP_ROOT}")
    exp = expand_shortcuts(request.shortcuts, tree.shortcuts)

    def pick(name, default):
        v = getattr(request, name)
        if v is None:
            v = exp.flags.get(name, default)
        return v

    dims = pick("dims", 2)
    geometry = Geometry(dims, pick("nxb", 8), pick("nyb", 8), pick("nzb", 1 if dims == 2 else 8),
                        pick("maxblocks", 1000))
    _validate_geometry(geometry)
    auto = request.auto or bool(exp.flags.get("auto", False))

    selected: set[str] = set()

    def select(path):
        parts = path.split("/")
        for i in range(1, len(parts) + 1):
            selected.add("/".join(parts[:i]))

    for path in [app, *sorted(exp.units), *request.units]:
        if path not in tree:
            raise MissingDependency(f"requested unit {path} does not exist")
        select(path)

    changed = True
    while changed:
        changed = False
        for path in sorted(selected):
            for req in tree[path].config.requires:
                if req not in tree:
                    raise MissingDependency(f"{path} requires {req}, which is not in the tree")
                if auto and req not in selected:
                    select(req)
                    changed = True
        if changed:
            continue
        for path in sorted(selected):
            node = tree[path]
            kids = tree.children(path)
            if kids and node.config.defaults and not any(k in selected for k in kids):
                child = f"{path}/{node.config.defaults[0]}" if path else node.config.defaults[0]
                if child not in tree:
                    raise CompositionError(f"{path}: DEFAULT {node.config.defaults[0]} is not a child")
                select(child)
                changed = True

    for path in sorted(selected):
        missing = [r for r in tree[path].config.requires if r not in selected]
        if missing:
            raise MissingDependency(f"{path} requires {', '.join(missing)}"
                                    + ("" if auto else " (use -auto or select it explicitly)"))
        for group in tree[path].config.exclusive_groups:
            chosen = [n for n in group if (f"{path}/{n}" if path else n) in selected]
            if len(chosen) > 1:
                raise ExclusivityViolation(f"{path or '<root>'}: {' and '.join(chosen)} are mutually exclusive")

    ordered: list[str] = []

    def walk(path):
        for kid in tree.children(path):
            if kid in selected:
                ordered.append(kid)
                walk(kid)

    walk("")

    bindings: dict[str, str] = {}
    for path in ordered:
        for key in sorted(tree[path].implementations):
            prev = bindings.get(key)
            if prev is not None and not path.startswith(prev + "/"):
                raise CompositionError(f"implementation {key!r} provided by unrelated units {prev} and {path}")
            bindings[key] = path

    params: dict[str, ParameterDecl] = {}
    variables: dict[str, VariableDecl] = {}
    for path in ordered:
        cfg = tree[path].config
        for decl in cfg.parameters:
            if decl.name in params:
                raise DuplicateParameter(f"parameter {decl.name} declared by {params[decl.name].owning_unit} and {path}")
            params[decl.name] = decl
        for var in cfg.variables:
            old = variables.get(var.name)
            if old is not None:
                if old.centering != var.centering:
                    raise CompositionError(f"variable {var.name} declared {old.centering} by {old.owning_unit} "
                                           f"and {var.centering} by {path}")
                continue
            variables[var.name] = var

    return SimulationManifest(
        resolved_units=tuple(ordered),
        implementation_bindings=dict(sorted(bindings.items())),
        parameter_schema=tuple(params[k] for k in sorted(params)),
        field_registry=tuple(variables[k] for k in sorted(variables)),
        geometry=geometry,
        request=request.echo(),
        tree_hash=tree.content_hash,
        site=request.site or "",
    )


def _manifest_items(m: SimulationManifest) -> list[tuple[str, str]]:
    items = []
    for i, u in enumerate(m.resolved_units):
        items.append((f"unit.{i:03d}", u))
    for k, v in m.implementation_bindings.items():
        items.append((f"binding.{k}", v))
    for d in m.parameter_schema:
        val = f"{d.type} {format_value(d.default, d.type)} {d.owning_unit}"
        if d.comment:
            val += f" # {d.comment}"
        items.append((f"parameter.{d.name}", val))
    for v in m.field_registry:
        items.append((f"variable.{v.name}", f"{v.centering} {v.owning_unit}"))
    g = m.geometry
    for name in ("dims", "nxb", "nyb", "nzb", "maxblocks"):
        items.append((f"geometry.{name}", str(getattr(g, name))))
    items.append(("provenance.request", m.request))
    items.append(("provenance.site", m.site))
    items.append(("provenance.tree_hash", m.tree_hash))
    return sorted(items)


def emit_manifest(m: SimulationManifest) -> bytes:
    lines = [
        "# composeflow simulation manifest",
        f"# request: {m.request}",
        f"# tree: {m.tree_hash}",
    ]
    lines.extend(f"{k} = {v}".rstrip() for k, v in _manifest_items(m))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_manifest(data: bytes | str) -> SimulationManifest:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    units, bindings, params, variables, geom, prov = {}, {}, [], [], {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            key, value = line.rstrip(" ="), ""
            if not line.rstrip().endswith("="):
                raise CompositionError(f"manifest line {lineno}: expected 'key = value'")
        section, _, name = key.partition(".")
        if section == "unit":
            units[int(name)] = value
        elif section == "binding":
            bindings[name] = value
        elif section == "parameter":
            body, comment = split_comment(value)
            ptype, rest = body.split(" ", 1)
            if rest.startswith('"'):
                _, end = scan_string(rest, 0)
                lit, owner = rest[:end], rest[end:].strip()
            else:
                lit, owner = rest.split(" ", 1)
            params.append(ParameterDecl(name, ptype, parse_literal(lit), owner.strip(), comment))
        elif section == "variable":
            cen, owner = (value.split(" ", 1) + [""])[:2]
            variables.append(VariableDecl(name, cen, owner))
        elif section == "geometry":
            geom[name] = int(value)
        elif section == "provenance":
            prov[name] = value
        else:
            raise CompositionError(f"manifest line {lineno}: unknown section {section!r}")
    return SimulationManifest(
        resolved_units=tuple(units[i] for i in sorted(units)),
        implementation_bindings=dict(sorted(bindings.items())),
        parameter_schema=tuple(sorted(params, key=lambda d: d.name)),
        field_registry=tuple(sorted(variables, key=lambda v: v.name)),
        geometry=Geometry(**geom),
        request=prov.get("request", ""),
        tree_hash=prov.get("tree_hash", ""),
        site=prov.get("site", ""),
    )


def default_source_tree() -> UnitTree:
    """The unit tree shipped with the package."""
    return UnitTree.from_directory(Path(__file__).parent / "source")

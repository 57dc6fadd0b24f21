"""Outlet buffer forcing and heater wall patches."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from composeflow.grid import AXES, BlockGrid, TileView
from composeflow.incompns import FACE, VEL, add_forcing

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


# -- outlet -------------------------------------------------------------------

@dataclass(frozen=True)
class OutletConfig:
    buffer: float = 0.1
    vel_ref: float = 1.0

    def __post_init__(self):
        if not self.buffer > 0.0:
            raise ValueError("out_buffer must be positive")
        if self.vel_ref == 0.0:
            raise ValueError("out_velRef must be nonzero")

    @property
    def tau(self) -> float:
        return self.buffer / abs(self.vel_ref)

    @classmethod
    def from_params(cls, params) -> "OutletConfig":
        return cls(params.get("out_buffer", 0.1), params.get("out_velRef", 1.0))


def outflow_faces(grid: BlockGrid) -> list[str]:
    return [f for f, kind in grid.domain.bc.items() if kind == "outflow_ins"]


def check_buffer(grid: BlockGrid, cfg: OutletConfig):
    for face in outflow_faces(grid):
        a = AXES.index(face[0])
        if cfg.buffer > grid.domain.upper[a] - grid.domain.lower[a]:
            raise ValueError(f"outlet buffer {cfg.buffer} is wider than the domain along {face[0]}")


def outlet_forcing(tile: TileView, grid: BlockGrid, cfg: OutletConfig) -> dict:
    """Relax face velocities in the buffer towards their upstream neighbour.

    Along the outflow normal the target for each face is the value one face
    further from the boundary, so the forcing vanishes once the outflow
    profile has zero gradient. Returns the forcing arrays that were added.
    """
    added = {}
    g = tile.nguard
    for face in outflow_faces(grid):
        a = AXES.index(face[0])
        hi_side = face[1] == "r"
        edge = grid.domain.upper[a] if hi_side else grid.domain.lower[a]
        for c in range(tile.dims):
            name = VEL[c]
            u = tile[name]
            n = tile.interior(name).shape
            pos = tile.coords(FACE[c], a)[g:g + n[a]]
            inside = np.abs(pos - edge) <= cfg.buffer
            if not inside.any():
                continue
            step = -1 if hi_side else 1
            cur = tuple(slice(g, g + n[b]) for b in range(tile.dims))
            up = tuple(slice(g + (step if b == a else 0), g + (step if b == a else 0) + n[b]) for b in range(tile.dims))
            force = -(u[cur] - u[up]) / cfg.tau
            shape = [1] * tile.dims
            shape[a] = n[a]
            force = np.where(inside.reshape(shape), force, 0.0)
            add_forcing(tile, c, force)
            added[name] = force
    return added


def boundary_flux(grid: BlockGrid, face: str) -> float:
    """Volume flux through one domain face (positive outward)."""
    a = AXES.index(face[0])
    u = grid.gather(VEL[a])
    sl = [slice(None)] * grid.dims
    sl[a] = -1 if face[1] == "r" else 0
    sign = 1.0 if face[1] == "r" else -1.0
    return sign * float(u[tuple(sl)].sum()) * grid.dx ** (grid.dims - 1)


# -- heater -------------------------------------------------------------------

@dataclass(frozen=True)
class HeaterPatch:
    face: str
    extent: tuple          # ((lo, hi), ...) along the tangential axes, in axis order
    temperature: float
    sites: tuple = field(default=())

    def tangential_axes(self, dims: int) -> list[int]:
        a = AXES.index(self.face[0])
        return [b for b in range(dims) if b != a]


class HeaterError(ValueError):
    pass


def parse_heater_text(text: str, dims: int = 2, default_temp: float = 1.0) -> list[HeaterPatch]:
    """Heater patches from ``[heater]`` / ``[[heater]]`` tables.

    Keys: ``face``, ``xmin``/``xmax`` (and ``ymin``... for the other
    tangential axes), ``temp``, optional ``sites`` (list of coordinates).
    """
    doc = tomllib.loads(text)
    tables = doc.get("heater", [])
    if isinstance(tables, dict):
        tables = [tables]
    patches = []
    for tab in tables:
        face = tab.get("face")
        if face not in ("xl", "xr", "yl", "yr", "zl", "zr")[: 2 * dims]:
            raise HeaterError(f"bad heater face {face!r}")
        a = AXES.index(face[0])
        extent = []
        for b in range(dims):
            if b == a:
                continue
            ax = AXES[b]
            lo, hi = tab.get(f"{ax}min", -np.inf), tab.get(f"{ax}max", np.inf)
            if not lo < hi:
                raise HeaterError(f"empty heater extent along {ax}")
            extent.append((float(lo), float(hi)))
        sites = tuple(tuple(float(v) for v in s) for s in tab.get("sites", []))
        patches.append(HeaterPatch(face, tuple(extent), float(tab.get("temp", default_temp)), sites))
    return patches


def read_heater_file(path, dims: int = 2, default_temp: float = 1.0) -> list[HeaterPatch]:
    return parse_heater_text(Path(path).read_text(), dims, default_temp)


def validate_patches(grid: BlockGrid, patches):
    dom = grid.domain
    for p in patches:
        if p.face not in dom.bc:
            raise HeaterError(f"heater face {p.face} is not a face of this {grid.dims}-D domain")
        if dom.bc[p.face] == "periodic":
            raise HeaterError(f"heater on periodic face {p.face} is not on a physical boundary")
        for b, (lo, hi) in zip(p.tangential_axes(grid.dims), p.extent):
            if np.isfinite(lo) and lo < dom.lower[b] or np.isfinite(hi) and hi > dom.upper[b]:
                raise HeaterError(f"heater extent along {AXES[b]} leaves the domain")


def heater_apply(tile: TileView, patches, name: str = "temp"):
    """Set guard temperatures so the wall value is the patch temperature over each patch.

    Guard layer k mirrors interior layer k: ``T_guard = 2 T_wall - T_interior``.
    Faces outside every patch keep their zero-gradient guards.
    """
    T = tile[name]
    g = tile.nguard
    for p in patches:
        if not tile.on_boundary(p.face):
            continue
        a = AXES.index(p.face[0])
        mask = np.ones(T.shape, dtype=bool)
        for b, (lo, hi) in zip(p.tangential_axes(tile.dims), p.extent):
            x = tile.coords("CENTER", b)
            sel = (x >= lo) & (x <= hi)
            shape = [1] * tile.dims
            shape[b] = len(x)
            mask &= sel.reshape(shape)
        n = T.shape[a]
        for k in range(g):
            guard = g - 1 - k if p.face[1] == "l" else n - g + k
            mirror = g + k if p.face[1] == "l" else n - g - 1 - k
            dst = [slice(None)] * tile.dims
            src = [slice(None)] * tile.dims
            dst[a], src[a] = guard, mirror
            dst, src = tuple(dst), tuple(src)
            T[dst] = np.where(mask[dst], 2.0 * p.temperature - T[src], T[dst])

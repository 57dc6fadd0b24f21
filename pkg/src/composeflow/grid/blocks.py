"""Uniform block-structured Cartesian grid with staggered storage.

Each block (tile) owns its arrays, guard layers included. Guard cells are
filled by :func:`fill_guard_cells`, which assembles every requested
variable into a single global array, applies the physical boundary
conditions axis by axis (corners come out of the second sweep) and hands
each tile back its window. The result is identical to a neighbour-to-
neighbour halo exchange followed by boundary application.

Array index ``g + i`` holds cell ``i`` of a block (``g`` guard width). For
face-centred variables the extent along the normal axis is one larger and
index ``g + i`` holds the low face of cell ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

CENTERINGS = ("CENTER", "FACEX", "FACEY", "FACEZ")
FACES = ("xl", "xr", "yl", "yr", "zl", "zr")
BC_TYPES = ("inflow_ins", "outflow_ins", "noslip_ins", "slip_ins", "periodic")
AXES = "xyz"


class GridError(ValueError):
    pass


def face_axis(centering: str) -> int | None:
    """Axis a face-centred variable is staggered along (None for CENTER)."""
    if centering == "CENTER":
        return None
    try:
        return "XYZ".index(centering[-1])
    except ValueError:
        raise GridError(f"unknown centering {centering!r}") from None


@dataclass(frozen=True)
class DomainSpec:
    dims: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nblocks: tuple[int, ...]
    ncells: tuple[int, ...]
    bc: Mapping[str, str] = field(default_factory=dict)
    inflow: Mapping[str, float] = field(default_factory=dict)
    nguard: int = 2
    maxblocks: int | None = None

    def __post_init__(self):
        d = self.dims
        if d not in (2, 3):
            raise GridError(f"dims must be 2 or 3, got {d}")
        for name in ("lower", "upper", "nblocks", "ncells"):
            if len(getattr(self, name)) != d:
                raise GridError(f"{name} needs {d} entries")
        for a in range(d):
            if not self.upper[a] > self.lower[a]:
                raise GridError(f"{AXES[a]}max must exceed {AXES[a]}min")
            if self.nblocks[a] < 1 or self.ncells[a] < 1:
                raise GridError("block counts and cells per block must be positive")
        if self.nguard < 2:
            raise GridError("nguard must be at least 2")
        bc = {f: self.bc.get(f, "periodic") for f in FACES[: 2 * d]}
        for f, kind in bc.items():
            if kind not in BC_TYPES:
                raise GridError(f"unknown boundary type {kind!r} on face {f}")
        for a in range(d):
            lo, hi = bc[AXES[a] + "l"], bc[AXES[a] + "r"]
            if (lo == "periodic") != (hi == "periodic"):
                raise GridError(f"periodic boundary on {AXES[a]} must be set on both faces")
        object.__setattr__(self, "bc", bc)
        spacing = [(self.upper[a] - self.lower[a]) / (self.nblocks[a] * self.ncells[a]) for a in range(d)]
        if not np.allclose(spacing, spacing[0], rtol=1e-12, atol=0.0):
            raise GridError(f"cells must be isotropic, got spacings {spacing}")
        nb = int(np.prod(self.nblocks))
        if self.maxblocks is not None and nb > self.maxblocks:
            raise GridError(f"{nb} blocks exceed maxblocks={self.maxblocks}")

    @property
    def dx(self) -> float:
        return (self.upper[0] - self.lower[0]) / (self.nblocks[0] * self.ncells[0])

    @property
    def global_cells(self) -> tuple[int, ...]:
        return tuple(b * n for b, n in zip(self.nblocks, self.ncells))

    def periodic(self, axis: int) -> bool:
        return self.bc[AXES[axis] + "l"] == "periodic"

    @classmethod
    def from_params(cls, params: Mapping, dims: int, ncells: Sequence[int], maxblocks: int | None = None) -> "DomainSpec":
        """Build from parfile names (``xmin``, ``nblockx``, ``xl_boundary_type``, ...)."""
        lower, upper, nblocks = [], [], []
        bc, inflow = {}, {}
        for a in range(dims):
            ax = AXES[a]
            lower.append(float(params.get(f"{ax}min", 0.0)))
            upper.append(float(params.get(f"{ax}max", 1.0)))
            nblocks.append(int(params.get(f"nblock{ax}", 1)))
            for side in "lr":
                face = ax + side
                bc[face] = str(params.get(f"{face}_boundary_type", "periodic"))
                inflow[face] = float(params.get(f"{face}_inflow_value", 0.0))
        return cls(dims, tuple(lower), tuple(upper), tuple(nblocks), tuple(int(n) for n in ncells[:dims]),
                   bc, inflow, maxblocks=maxblocks)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    centering: str
    persistence: str = "checkpoint"  # checkpoint | plot | scratch


class FieldRegistry:
    """Ordered set of grid variables."""

    def __init__(self, fields: Iterable[FieldSpec] = ()):
        self._fields: dict[str, FieldSpec] = {}
        for f in fields:
            self.add(f.name, f.centering, f.persistence)

    def add(self, name: str, centering: str, persistence: str = "checkpoint") -> FieldSpec:
        if centering not in CENTERINGS:
            raise GridError(f"unknown centering {centering!r} for {name}")
        if persistence not in ("checkpoint", "plot", "scratch"):
            raise GridError(f"unknown persistence {persistence!r}")
        old = self._fields.get(name)
        if old is not None:
            if old.centering != centering:
                raise GridError(f"variable {name} registered as {old.centering} and {centering}")
            return old
        spec = FieldSpec(name, centering, persistence)
        self._fields[name] = spec
        return spec

    @classmethod
    def from_declarations(cls, decls: Iterable, dims: int) -> "FieldRegistry":
        reg = cls()
        for d in decls:
            if d.centering == "FACEZ" and dims < 3:
                continue
            reg.add(d.name, d.centering)
        return reg

    def __contains__(self, name) -> bool:
        return name in self._fields

    def __getitem__(self, name) -> FieldSpec:
        return self._fields[name]

    def __iter__(self) -> Iterator[FieldSpec]:
        return iter(self._fields.values())

    def __len__(self) -> int:
        return len(self._fields)

    def names(self, persistence: str | None = None) -> list[str]:
        return [f.name for f in self._fields.values() if persistence is None or f.persistence == persistence]


class TileView:
    """One block: bounding box, spacing and guard-padded arrays."""

    def __init__(self, index, lower, upper, dx, ncells, nguard, registry, is_boundary):
        self.index = tuple(index)
        self.lower = tuple(lower)
        self.upper = tuple(upper)
        self.dx = dx
        self.ncells = tuple(ncells)
        self.nguard = nguard
        self.dims = len(ncells)
        self.registry = registry
        self._boundary = dict(is_boundary)
        self.data: dict[str, np.ndarray] = {}
        # per-tile scratch that is never checkpointed (RHS history, forcing masks)
        self.work: dict[str, np.ndarray] = {}

    def shape(self, centering: str) -> tuple[int, ...]:
        fa = face_axis(centering)
        return tuple(n + 2 * self.nguard + (1 if a == fa else 0) for a, n in enumerate(self.ncells))

    def allocate(self, spec: FieldSpec):
        if spec.name not in self.data:
            self.data[spec.name] = np.zeros(self.shape(spec.centering))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def __setitem__(self, name: str, value):
        self.data[name][...] = value

    def __contains__(self, name: str) -> bool:
        return name in self.data

    def centering(self, name: str) -> str:
        return self.registry[name].centering

    def interior_slices(self, centering: str) -> tuple[slice, ...]:
        g = self.nguard
        fa = face_axis(centering)
        return tuple(slice(g, g + n + (1 if a == fa else 0)) for a, n in enumerate(self.ncells))

    def interior(self, name: str) -> np.ndarray:
        return self.data[name][self.interior_slices(self.centering(name))]

    def coords(self, centering: str, axis: int) -> np.ndarray:
        """Coordinates along ``axis`` of every array index, guards included."""
        g = self.nguard
        n = self.shape(centering)[axis]
        offset = 0.0 if face_axis(centering) == axis else 0.5
        return self.lower[axis] + (np.arange(n) - g + offset) * self.dx

    def mesh(self, centering: str = "CENTER") -> list[np.ndarray]:
        return np.meshgrid(*[self.coords(centering, a) for a in range(self.dims)], indexing="ij")

    def on_boundary(self, face: str) -> bool:
        return self._boundary[face]


class BlockGrid:
    def __init__(self, domain: DomainSpec, registry: FieldRegistry):
        self.domain = domain
        self.registry = registry
        self.dims = domain.dims
        self.dx = domain.dx
        self.nguard = domain.nguard
        self.tiles: list[TileView] = []
        d = domain.dims
        nb = domain.nblocks
        # lexicographic, x fastest
        for flat in range(int(np.prod(nb))):
            idx = []
            rem = flat
            for a in range(d):
                idx.append(rem % nb[a])
                rem //= nb[a]
            lo = [domain.lower[a] + idx[a] * domain.ncells[a] * self.dx for a in range(d)]
            hi = [lo[a] + domain.ncells[a] * self.dx for a in range(d)]
            boundary = {}
            for a in range(d):
                boundary[AXES[a] + "l"] = idx[a] == 0
                boundary[AXES[a] + "r"] = idx[a] == nb[a] - 1
            tile = TileView(idx, lo, hi, self.dx, domain.ncells, self.nguard, registry, boundary)
            self.tiles.append(tile)
        for spec in registry:
            self._allocate(spec)

    def _allocate(self, spec: FieldSpec):
        for t in self.tiles:
            t.allocate(spec)

    def add_variable(self, name: str, centering: str, persistence: str = "scratch") -> FieldSpec:
        spec = self.registry.add(name, centering, persistence)
        self._allocate(spec)
        return spec

    def __contains__(self, name: str) -> bool:
        return name in self.registry

    # -- global views --------------------------------------------------
    def global_shape(self, centering: str) -> tuple[int, ...]:
        fa = face_axis(centering)
        return tuple(n + (1 if a == fa else 0) for a, n in enumerate(self.domain.global_cells))

    def _window(self, tile: TileView, centering: str, guards: bool) -> tuple[slice, ...]:
        fa = face_axis(centering)
        g = self.nguard
        out = []
        for a, n in enumerate(self.domain.ncells):
            start = tile.index[a] * n
            extra = 1 if a == fa else 0
            if guards:
                out.append(slice(start, start + n + extra + 2 * g))
            else:
                out.append(slice(start, start + n + extra))
        return tuple(out)

    def gather(self, name: str) -> np.ndarray:
        """Global interior array. Shared faces take the high-side block's value."""
        cen = self.registry[name].centering
        out = np.empty(self.global_shape(cen))
        for t in self.tiles:
            out[self._window(t, cen, False)] = t.interior(name)
        return out

    def scatter(self, name: str, values: np.ndarray):
        cen = self.registry[name].centering
        for t in self.tiles:
            t.interior(name)[...] = values[self._window(t, cen, False)]

    def cell_coords(self, axis: int) -> np.ndarray:
        n = self.domain.global_cells[axis]
        return self.domain.lower[axis] + (np.arange(n) + 0.5) * self.dx

    def poisson_bc(self) -> list[tuple[str, str]]:
        """Pressure boundary kinds per axis derived from the velocity boundary types."""
        out = []
        for a in range(self.dims):
            pair = []
            for side in "lr":
                kind = self.domain.bc[AXES[a] + side]
                if kind == "periodic":
                    pair.append("periodic")
                elif kind == "outflow_ins":
                    pair.append("dirichlet")
                else:
                    pair.append("neumann")
            out.append(tuple(pair))
        return out

    def fixed_face_mask(self, tile: TileView, name: str) -> np.ndarray | None:
        """Interior mask of boundary faces whose normal velocity is imposed (wall, slip, inflow)."""
        fa = face_axis(tile.centering(name))
        if fa is None:
            return None
        mask = np.zeros(tile.interior(name).shape, dtype=bool)
        for side, idx in (("l", 0), ("r", -1)):
            face = AXES[fa] + side
            if tile.on_boundary(face) and self.domain.bc[face] in ("noslip_ins", "slip_ins", "inflow_ins"):
                sl = [slice(None)] * self.dims
                sl[fa] = idx
                mask[tuple(sl)] = True
        return mask


def init_grid(domain: DomainSpec, registry: FieldRegistry) -> BlockGrid:
    """Allocate one tile per block, every registered variable zero-initialised."""
    return BlockGrid(domain, registry)


def tile_iterator(grid: BlockGrid) -> Iterator[TileView]:
    return iter(grid.tiles)


# -- guard fill ------------------------------------------------------------

def _sl(ndim, axis, s):
    out = [slice(None)] * ndim
    out[axis] = s
    return tuple(out)


def _apply_axis(G, axis, g, M, normal, kind_lo, kind_hi, velocity, v_lo, v_hi):
    """Fill guards of global padded array ``G`` along one axis.

    ``M`` is the interior extent along the axis; for a normal face variable
    the boundary faces sit at ``g`` and ``g + M - 1``.
    """
    nd = G.ndim
    if kind_lo == "periodic":
        if normal:
            N = M - 1
            G[_sl(nd, axis, g + N)] = G[_sl(nd, axis, g)]
            G[_sl(nd, axis, slice(0, g))] = G[_sl(nd, axis, slice(N, N + g))]
            G[_sl(nd, axis, slice(g + N + 1, g + N + 1 + g))] = G[_sl(nd, axis, slice(g + 1, 2 * g + 1))]
        else:
            G[_sl(nd, axis, slice(0, g))] = G[_sl(nd, axis, slice(M, M + g))]
            G[_sl(nd, axis, slice(g + M, 2 * g + M))] = G[_sl(nd, axis, slice(g, 2 * g))]
        return
    for side, kind, value in (("lo", kind_lo, v_lo), ("hi", kind_hi, v_hi)):
        if normal and velocity:
            b = g if side == "lo" else g + M - 1
            step = -1 if side == "lo" else 1
            if kind in ("noslip_ins", "slip_ins"):
                G[_sl(nd, axis, b)] = 0.0
                for k in range(g):
                    G[_sl(nd, axis, b + step * (k + 1))] = -G[_sl(nd, axis, b - step * (k + 1))]
            elif kind == "inflow_ins":
                G[_sl(nd, axis, b)] = value
                for k in range(g):
                    G[_sl(nd, axis, b + step * (k + 1))] = 2.0 * value - G[_sl(nd, axis, b - step * (k + 1))]
            else:  # outflow: boundary face evolves, guards mirror it
                for k in range(g):
                    G[_sl(nd, axis, b + step * (k + 1))] = G[_sl(nd, axis, b - step * (k + 1))]
        else:
            if side == "lo":
                first, step = g, -1
            else:
                first, step = g + M - 1, 1
            odd = velocity and kind in ("noslip_ins", "inflow_ins")
            for k in range(g):
                src = G[_sl(nd, axis, first - step * k)]
                G[_sl(nd, axis, first + step * (k + 1))] = -src if odd else src


def fill_guard_cells(grid: BlockGrid, names: Iterable[str] | None = None):
    """Halo exchange plus physical boundary conditions for ``names`` (default: all)."""
    if names is None:
        names = grid.registry.names()
    dom = grid.domain
    g = grid.nguard
    for name in names:
        if name not in grid.registry:
            raise GridError(f"variable {name!r} is not registered")
        cen = grid.registry[name].centering
        fa = face_axis(cen)
        shape = grid.global_shape(cen)
        G = np.zeros(tuple(n + 2 * g for n in shape))
        G[tuple(slice(g, g + n) for n in shape)] = grid.gather(name)
        velocity = fa is not None
        for a in range(grid.dims):
            lo, hi = dom.bc[AXES[a] + "l"], dom.bc[AXES[a] + "r"]
            _apply_axis(G, a, g, shape[a], a == fa, lo, hi, velocity,
                        dom.inflow.get(AXES[a] + "l", 0.0), dom.inflow.get(AXES[a] + "r", 0.0))
        for t in grid.tiles:
            t.data[name][...] = G[grid._window(t, cen, True)]

"""Level-set multiphase treatment: transport, reinitialisation, properties, interfacial force.

Sign convention: the level set ``dfun`` is positive in the gas and negative
in the liquid. Property ratios are relative to the liquid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from composeflow.grid import BlockGrid, TileView
from composeflow.incompns import add_forcing, inverse_density_faces, velocities
from composeflow.stencils import (
    advect_upwind,
    curvature,
    integrate_ab2,
    redistance,
    smoothed_heaviside,
)


@dataclass(frozen=True)
class MultiphaseConfig:
    rho_gas: float = 0.001
    mu_gas: float = 0.02
    inv_weber: float = 0.0
    eps_cells: float = 2.5
    redistance_every: int = 5
    redistance_iters: int = 5

    def __post_init__(self):
        for name in ("rho_gas", "mu_gas"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.inv_weber < 0.0:
            raise ValueError("mph_invWeber must be nonnegative")
        if self.eps_cells <= 0.0:
            raise ValueError("interface half-width must be positive")

    @classmethod
    def from_params(cls, params) -> "MultiphaseConfig":
        return cls(
            rho_gas=params.get("mph_rhoGas", 0.001),
            mu_gas=params.get("mph_muGas", 0.02),
            inv_weber=params.get("mph_invWeber", 0.0),
            eps_cells=params.get("mph_epsCells", 2.5),
            redistance_every=params.get("mph_redistance_every", 5),
            redistance_iters=params.get("mph_redistance_iters", 5),
        )


def blend(heaviside, liquid_value, gas_value):
    # written so that H=0 and H=1 reproduce the end values exactly
    return (1.0 - heaviside) * liquid_value + heaviside * gas_value


def mph_set_properties(tile: TileView, cfg: MultiphaseConfig):
    """Density and viscosity ratios from the level set, guard layers included."""
    eps = cfg.eps_cells * tile.dx
    H = smoothed_heaviside(tile["dfun"], eps)
    tile["dens"] = blend(H, 1.0, cfg.rho_gas)
    tile["visc"] = blend(H, 1.0, cfg.mu_gas)
    return tile["dens"], tile["visc"]


def interface_curvature(phi: np.ndarray, kappa: np.ndarray, nd: int) -> np.ndarray:
    """Curvature of the zero contour seen from a point at signed distance ``phi``.

    Level-set curvature changes across the smoothing band (``1/(R + phi)``
    for a circle); shifting it back to the interface makes the capillary
    force a discrete gradient that the projection can balance. Exact for
    circles and spheres.
    """
    scale = 1.0 - phi * kappa / (nd - 1)
    return kappa / np.maximum(scale, 0.5)


def surface_tension(phi: np.ndarray, rho: np.ndarray, dx: float, sigma: float, eps: float,
                    g: int = 2) -> list[np.ndarray]:
    """Balanced-force continuum surface force per unit mass at the interior faces.

    ``-sigma * kappa_f * (H_i - H_{i-1})/dx / rho_f`` with face curvature the
    mean of its two cells. Returns one array per face-velocity component.
    """
    nd = phi.ndim
    ncell = tuple(s - 2 * g for s in phi.shape)
    kap = interface_curvature(phi[tuple(slice(1, -1) for _ in range(nd))] if g > 1 else phi,
                              curvature(phi, dx, g=1), nd)  # interior plus one guard layer
    H = smoothed_heaviside(phi, eps)
    out = []
    for a in range(nd):
        n = list(ncell)
        n[a] += 1

        def win(arr, off, first):
            return arr[tuple(slice(first + (off if b == a else 0), first + (off if b == a else 0) + n[b])
                             for b in range(nd))]

        k_f = 0.5 * (win(kap, -1, 1) + win(kap, 0, 1))
        dH = (win(H, 0, g) - win(H, -1, g)) / dx
        out.append(-sigma * k_f * dH * inverse_density_faces(rho, a, g, n))
    return out


def mph_vel_forcing(tile: TileView, cfg: MultiphaseConfig):
    """Add the interfacial force to the momentum right-hand side (gravity is added by the flow unit)."""
    if cfg.inv_weber == 0.0:
        return None
    eps = cfg.eps_cells * tile.dx
    forces = surface_tension(tile["dfun"], tile["dens"], tile.dx, cfg.inv_weber, eps, tile.nguard)
    for a, f in enumerate(forces):
        add_forcing(tile, a, f)
    if "curv" in tile:
        tile.interior("curv")[...] = curvature(tile["dfun"], tile.dx, tile.nguard)
    return forces


def mph_advect(tile: TileView, dt: float, first_step: bool, order: int = 2):
    """Upwind transport of the level set with the current face velocities."""
    phi = tile["dfun"]
    rhs = advect_upwind(phi, velocities(tile), tile.dx, "CENTER", tile.nguard, order=order)
    prev = tile.work.get("prev_dfun")
    new = integrate_ab2(tile.interior("dfun"), rhs, prev, dt, first_step or prev is None)
    tile.work["prev_dfun"] = rhs
    tile.interior("dfun")[...] = new
    return new


def level_set_bcs(grid: BlockGrid) -> tuple[str, ...]:
    return tuple("periodic" if grid.domain.periodic(a) else "extrapolate" for a in range(grid.dims))


def mph_redistance_if_due(grid: BlockGrid, step: int, cfg: MultiphaseConfig, force: bool = False) -> bool:
    every = cfg.redistance_every
    if not force and (every <= 0 or step % every != 0):
        return False
    phi = grid.gather("dfun")
    if not (np.any(phi > 0.0) and np.any(phi < 0.0)):
        return False
    grid.scatter("dfun", redistance(phi, grid.dx, cfg.redistance_iters, bcs=level_set_bcs(grid)))
    return True


# -- diagnostics and seeds -------------------------------------------------

def liquid_volume(phi: np.ndarray, dx: float, eps: float | None = None) -> float:
    """Area (2-D) or volume (3-D) of ``phi < 0`` from the smoothed Heaviside."""
    eps = 1.5 * dx if eps is None else eps
    return float(np.sum(1.0 - smoothed_heaviside(phi, eps)) * dx ** phi.ndim)


def liquid_centroid(phi: np.ndarray, coords, dx: float) -> tuple[float, ...]:
    w = 1.0 - smoothed_heaviside(phi, 1.5 * dx)
    total = w.sum()
    return tuple(float((w * c).sum() / total) for c in coords)


def circle_distance(coords, center, radius) -> np.ndarray:
    """Signed distance that is negative inside a circle/sphere (liquid drop)."""
    r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))
    return np.sqrt(r2) - radius


def plane_distance(coords, normal, offset) -> np.ndarray:
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    return sum(c * k for c, k in zip(coords, nrm)) - offset


def slotted_disk(coords, center, radius, slot_width, slot_depth) -> np.ndarray:
    """Disk with a slot cut from its bottom; negative inside the solid part."""
    x, y = coords[0] - center[0], coords[1] - center[1]
    disk = np.sqrt(x * x + y * y) - radius
    half = 0.5 * slot_width
    top = -radius + slot_depth
    # slot as a box from below the disk up to ``top``
    dx_box = np.abs(x) - half
    dy_box = y - top
    box_out = np.sqrt(np.maximum(dx_box, 0.0) ** 2 + np.maximum(dy_box, 0.0) ** 2)
    box = box_out + np.minimum(np.maximum(dx_box, dy_box), 0.0)
    return np.maximum(disk, -box)


def pressure_jump(grid: BlockGrid, radius_inside: float, radius_outside: float, center) -> float:
    """Mean pressure inside ``radius_inside`` minus mean pressure outside ``radius_outside``."""
    p = grid.gather("pres")
    coords = np.meshgrid(*[grid.cell_coords(a) for a in range(grid.dims)], indexing="ij")
    r = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(coords, center)))
    return float(p[r < radius_inside].mean() - p[r > radius_outside].mean())


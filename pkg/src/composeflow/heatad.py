"""Temperature transport: optional upwind advection plus explicit diffusion."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from composeflow.grid import AXES, BlockGrid, TileView
from composeflow.multiphase import blend
from composeflow.stencils import advect_upwind, diffuse_central, integrate_ab2, smoothed_heaviside

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThermalConfig:
    alpha: float = 0.01
    alpha_gas: float = 1.0       # ratio, used by varDiffusion
    formulation: str = "constDiffusion"
    inflow_temp: float = 0.0
    eps_cells: float = 2.5

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("ht_alpha must be nonnegative")
        if self.formulation not in ("constDiffusion", "varDiffusion"):
            raise ValueError(f"unknown formulation {self.formulation!r}")

    @classmethod
    def from_params(cls, params, formulation: str) -> "ThermalConfig":
        return cls(params.get("ht_alpha", 0.01), params.get("ht_alphaGas", 1.0), formulation,
                   params.get("ht_tempInflow", 0.0), params.get("mph_epsCells", 2.5))


def stable_dt(cfg: ThermalConfig, dx: float, dims: int) -> float:
    a = cfg.alpha * max(1.0, cfg.alpha_gas if cfg.formulation == "varDiffusion" else 1.0)
    return np.inf if a == 0.0 else dx * dx / (2.0 * dims * a)


def diffusivity(tile: TileView, cfg: ThermalConfig):
    if cfg.formulation == "constDiffusion":
        return cfg.alpha
    if "dfun" not in tile:
        raise ValueError("varDiffusion needs the multiphase level set")
    H = smoothed_heaviside(tile["dfun"], cfg.eps_cells * tile.dx)
    return cfg.alpha * blend(H, 1.0, cfg.alpha_gas)


def heat_rhs(tile: TileView, cfg: ThermalConfig, vel=None) -> np.ndarray:
    """``-u . grad T`` (when coupled to a flow) plus ``div(alpha grad T)``."""
    T = tile["temp"]
    g = tile.nguard
    if vel is not None:
        rhs = advect_upwind(T, vel, tile.dx, "CENTER", g)
    else:
        rhs = np.zeros(tile.interior("temp").shape)
    if cfg.alpha > 0.0:
        rhs = rhs + diffuse_central(T, diffusivity(tile, cfg), tile.dx, "CENTER", g)
    tile.work["rhs_temp"] = rhs
    return rhs


def heat_advance(tile: TileView, dt: float, first_step: bool) -> np.ndarray:
    rhs = tile.work.pop("rhs_temp", None)
    if rhs is None:
        rhs = np.zeros(tile.interior("temp").shape)
    prev = tile.work.get("prev_temp")
    new = integrate_ab2(tile.interior("temp"), rhs, prev, dt, first_step or prev is None)
    tile.work["prev_temp"] = rhs
    tile.interior("temp")[...] = new
    return new


def apply_inflow_temperature(grid: BlockGrid, value: float):
    """Dirichlet temperature on inflow faces: the wall value is the mean of guard and interior."""
    g = grid.nguard
    for t in grid.tiles:
        T = t["temp"]
        for a in range(grid.dims):
            for side in "lr":
                face = AXES[a] + side
                if not t.on_boundary(face) or grid.domain.bc[face] != "inflow_ins":
                    continue
                n = T.shape[a]
                for k in range(g):
                    guard = g - 1 - k if side == "l" else n - g + k
                    mirror = g + k if side == "l" else n - g - 1 - k
                    src = [slice(None)] * T.ndim
                    dst = [slice(None)] * T.ndim
                    src[a], dst[a] = mirror, guard
                    T[tuple(dst)] = 2.0 * value - T[tuple(src)]


def check_stability(cfg: ThermalConfig, dt: float, dx: float, dims: int) -> bool:
    limit = stable_dt(cfg, dx, dims)
    if dt > limit:
        logger.warning("heat diffusion step %.3e exceeds the explicit limit %.3e", dt, limit)
        return False
    return True

"""Incompressible Navier-Stokes on the staggered grid: fractional-step projection.

The per-tile operations accumulate a momentum right-hand side in
``tile.work["rhs_<vel>"]``; :func:`ins_predictor` advances it with AB2 and
:func:`ins_project` removes the divergence globally. The pressure is not
carried in the predictor (non-incremental projection), so each step's
pressure is the full pressure at that step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from composeflow.grid import (
    BlockGrid,
    NonConvergence,
    PoissonProblem,
    PoissonResult,
    TileView,
    harmonic_faces,
)
from composeflow.stencils import diffuse_central, integrate_ab2, interior_shape

logger = logging.getLogger(__name__)

VEL = ("velx", "vely", "velz")
CVEL = ("cvlx", "cvly", "cvlz")
FACE = ("FACEX", "FACEY", "FACEZ")


@dataclass
class FlowConfig:
    inv_reynolds: float = 1.0
    grav: tuple = (0.0, 0.0, 0.0)
    dt: float = 1e-3
    formulation: str = "constDens"
    poisson_tol: float = 1e-9
    poisson_maxit: int = 200
    poisson_method: str = "mgcg"

    def __post_init__(self):
        if self.inv_reynolds < 0.0:
            raise ValueError("ins_invReynolds must be nonnegative")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.formulation not in ("constDens", "varDens"):
            raise ValueError(f"unknown formulation {self.formulation!r}")

    @classmethod
    def from_params(cls, params, formulation: str) -> "FlowConfig":
        dt = params.get("ins_dt", 0.0) or params.get("dr_dtInit", 1e-3)
        return cls(
            inv_reynolds=params.get("ins_invReynolds", 1.0),
            grav=(params.get("ins_gravX", 0.0), params.get("ins_gravY", 0.0), params.get("ins_gravZ", 0.0)),
            dt=dt,
            formulation=formulation,
            poisson_tol=params.get("ins_poisson_tol", 1e-9),
            poisson_maxit=params.get("ins_poisson_maxit", 200),
            poisson_method=params.get("ins_poisson_method", "mgcg"),
        )


def _win(g, n, shifts):
    return tuple(slice(g + shifts.get(a, 0), g + shifts.get(a, 0) + n[a]) for a in range(len(n)))


# -- array kernels ----------------------------------------------------------

def momentum_advection(vel, dx: float, g: int = 2) -> list[np.ndarray]:
    """Divergence-form central ``-div(u u_a)`` at each face-velocity location."""
    nd = len(vel)
    out = []
    for a in range(nd):
        ua = vel[a]
        n = interior_shape(ua, g)
        c = ua[_win(g, n, {})]
        tend = np.zeros(n)
        for b in range(nd):
            if b == a:
                right = 0.5 * (c + ua[_win(g, n, {a: 1})])
                left = 0.5 * (ua[_win(g, n, {a: -1})] + c)
                tend -= (right * right - left * left) / dx
            else:
                ub = vel[b]
                ua_lo = 0.5 * (ua[_win(g, n, {b: -1})] + c)
                ua_hi = 0.5 * (c + ua[_win(g, n, {b: 1})])
                ub_lo = 0.5 * (ub[_win(g, n, {a: -1})] + ub[_win(g, n, {})])
                ub_hi = 0.5 * (ub[_win(g, n, {a: -1, b: 1})] + ub[_win(g, n, {b: 1})])
                tend -= (ua_hi * ub_hi - ua_lo * ub_lo) / dx
        out.append(tend)
    return out


def face_average(cell: np.ndarray, axis: int) -> np.ndarray:
    """Cell array to faces along ``axis`` (arithmetic mean; end faces copy the end cell)."""
    lo = np.take(cell, [0], axis=axis)
    hi = np.take(cell, [-1], axis=axis)
    n = cell.shape[axis]
    mid = 0.5 * (np.take(cell, range(0, n - 1), axis=axis) + np.take(cell, range(1, n), axis=axis))
    return np.concatenate([lo, mid, hi], axis=axis)


def inverse_density_faces(rho: np.ndarray, axis: int, g: int, n) -> np.ndarray:
    """``1/rho`` at the interior faces along ``axis`` (mean density across the face)."""
    lo = rho[_win(g, n, {axis: -1})]
    hi = rho[_win(g, n, {})]
    return 2.0 / (lo + hi)


def momentum_diffusion(vel, dx: float, inv_re: float, g: int = 2, mu=None, rho=None) -> list[np.ndarray]:
    """Viscous tendency: ``inv_re * lap(u)``, or ``(1/rho) div(inv_re mu grad u)`` with ``mu``/``rho``."""
    out = []
    for a, ua in enumerate(vel):
        n = interior_shape(ua, g)
        if inv_re == 0.0:
            out.append(np.zeros(n))
            continue
        if mu is None:
            out.append(diffuse_central(ua, inv_re, dx, FACE[a], g))
            continue
        K = inv_re * face_average(mu, a)
        tend = diffuse_central(ua, K, dx, FACE[a], g)
        if rho is not None:
            tend = inverse_density_faces(rho, a, g, n) * tend
        out.append(tend)
    return out


def face_to_center(vel, g: int = 2) -> list[np.ndarray]:
    out = []
    for a, ua in enumerate(vel):
        n = list(interior_shape(ua, g))
        n[a] -= 1
        out.append(0.5 * (ua[_win(g, n, {})] + ua[_win(g, n, {a: 1})]))
    return out


def divergence(faces, dx: float) -> np.ndarray:
    """Cell divergence of global (guard-free) face arrays."""
    div = None
    for a, u in enumerate(faces):
        n = u.shape[a]
        d = (np.take(u, range(1, n), axis=a) - np.take(u, range(0, n - 1), axis=a)) / dx
        div = d if div is None else div + d
    return div


# -- tile operations ----------------------------------------------------------

def velocities(tile: TileView) -> tuple[np.ndarray, ...]:
    return tuple(tile[VEL[a]] for a in range(tile.dims))


def _accumulate(tile: TileView, name: str, value):
    key = "rhs_" + name
    if key in tile.work:
        tile.work[key] = tile.work[key] + value
    else:
        tile.work[key] = np.array(value, dtype=float) if np.ndim(value) else np.full(tile.interior(name).shape, value)


def reset_rhs(tile: TileView):
    for a in range(tile.dims):
        tile.work.pop("rhs_" + VEL[a], None)


def ins_advection(tile: TileView) -> list[np.ndarray]:
    tend = momentum_advection(velocities(tile), tile.dx, tile.nguard)
    for a, t in enumerate(tend):
        _accumulate(tile, VEL[a], t)
    return tend


def ins_diffusion(tile: TileView, cfg: FlowConfig) -> list[np.ndarray]:
    if cfg.formulation == "varDens":
        if "dens" not in tile or "visc" not in tile:
            raise ValueError("varDens diffusion needs the dens and visc fields")
        tend = momentum_diffusion(velocities(tile), tile.dx, cfg.inv_reynolds, tile.nguard,
                                  mu=tile["visc"], rho=tile["dens"])
    else:
        tend = momentum_diffusion(velocities(tile), tile.dx, cfg.inv_reynolds, tile.nguard)
    for a, t in enumerate(tend):
        _accumulate(tile, VEL[a], t)
    return tend


def add_gravity(tile: TileView, grav):
    for a in range(tile.dims):
        if grav[a] != 0.0:
            _accumulate(tile, VEL[a], float(grav[a]))


def add_forcing(tile: TileView, comp: int, value):
    _accumulate(tile, VEL[comp], value)


def ins_predictor(tile: TileView, dt: float, first_step: bool, fixed=None) -> list[np.ndarray]:
    """AB2 update of the face velocities with the accumulated right-hand side.

    ``fixed`` maps a velocity name to an interior mask of faces whose value
    is imposed by a boundary condition; those faces are left untouched.
    Immersed-body weights in ``tile.work["ib_w_<vel>"]`` blend the result
    towards ``tile.work["ib_u_<vel>"]``.
    """
    out = []
    for a in range(tile.dims):
        name = VEL[a]
        u = tile.interior(name)
        rhs = tile.work.get("rhs_" + name)
        if rhs is None:
            rhs = np.zeros(u.shape)
        prev = tile.work.get("prev_" + name)
        new = integrate_ab2(u, rhs, prev, dt, first_step or prev is None)
        tile.work["prev_" + name] = rhs
        w = tile.work.get("ib_w_" + name)
        if w is not None:
            new = (1.0 - w) * new + w * tile.work["ib_u_" + name]
        if fixed is not None and fixed.get(name) is not None:
            new = np.where(fixed[name], u, new)
        u[...] = new
        out.append(new)
    reset_rhs(tile)
    return out


def ins_face_to_center(tile: TileView):
    cen = face_to_center(velocities(tile), tile.nguard)
    for a, c in enumerate(cen):
        if CVEL[a] in tile:
            tile.interior(CVEL[a])[...] = c
    return cen


def clear_history(grid: BlockGrid):
    """Forget the AB2 history so the next step is a forward Euler step."""
    for t in grid.tiles:
        for key in [k for k in t.work if k.startswith("prev_")]:
            del t.work[key]


# -- projection ---------------------------------------------------------------

@dataclass
class ProjectionReport:
    max_divergence: float
    max_divergence_before: float
    poisson: PoissonResult
    cfl: float = 0.0
    extra: dict = field(default_factory=dict)


def pressure_problem(grid: BlockGrid, cfg: FlowConfig, cache: dict | None = None) -> PoissonProblem:
    bcs = grid.poisson_bc()
    shape = grid.domain.global_cells
    if cfg.formulation == "varDens":
        rho = grid.gather("dens")
        return PoissonProblem(shape, grid.dx, bcs, harmonic_faces(1.0 / rho, bcs))
    if cache is not None and "const" in cache:
        return cache["const"]
    prob = PoissonProblem(shape, grid.dx, bcs)
    if cache is not None:
        cache["const"] = prob
    return prob


def ins_project(grid: BlockGrid, cfg: FlowConfig, cache: dict | None = None) -> ProjectionReport:
    """Solve for the pressure and make the face velocities discretely divergence-free.

    The solve stops once ``max|r| <= tol/dt`` (and the relative tolerance),
    which bounds the post-projection divergence by ``tol``.
    """
    dims = grid.dims
    dt = cfg.dt
    dx = grid.dx
    faces = [grid.gather(VEL[a]) for a in range(dims)]
    div_star = divergence(faces, dx)
    prob = pressure_problem(grid, cfg, cache)
    x0 = grid.gather("pres") if "pres" in grid else None
    try:
        res = prob.solve(div_star / dt, tol=cfg.poisson_tol, max_iters=cfg.poisson_maxit, x0=x0,
                         atol=cfg.poisson_tol / dt, method=cfg.poisson_method)
    except NonConvergence:
        logger.error("pressure solve failed to converge")
        raise
    lev = prob.levels[0]
    p3 = res.p if res.p.ndim == 3 else res.p[..., None]
    pp = lev.padded(p3)
    lev.refresh(pp)
    coeffs = (lev.bx, lev.by, lev.bz)
    for a in range(dims):
        hi = tuple(slice(1, None) if b == a else slice(1, -1) for b in range(3))
        lo = tuple(slice(0, -1) if b == a else slice(1, -1) for b in range(3))
        flux = coeffs[a] * (pp[hi] - pp[lo]) / dx
        faces[a] = faces[a] - dt * flux.reshape(faces[a].shape)
        grid.scatter(VEL[a], faces[a])
    div = divergence(faces, dx)
    if "pres" in grid:
        grid.scatter("pres", res.p)
    if "divv" in grid:
        grid.scatter("divv", div)
    umax = max(float(np.abs(f).max()) for f in faces)
    cfl = umax * dt / dx
    logger.debug("projection: %d iterations, max div %.3e, CFL %.3f", res.iterations, np.abs(div).max(), cfl)
    return ProjectionReport(float(np.abs(div).max()), float(np.abs(div_star).max()), res, cfl)

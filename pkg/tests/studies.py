"""Numerical studies shared by the unit tests (small sizes) and the acceptance suite.

Each function runs one experiment and returns plain numbers, so callers
decide what to assert.
"""
from __future__ import annotations

import numpy as np
from conftest import make_grid, observed_orders

from composeflow import stencils
from composeflow.grid import solve_poisson

TWO_PI = 2.0 * np.pi


def _cell_mesh(n):
    x = (np.arange(n) + 0.5) / n
    return np.meshgrid(x, x, indexing="ij")


def diffusion_errors(sizes=(32, 64, 128), alpha=0.01, t_end=0.25):
    """Heat equation on the periodic unit square, explicit AB2 in time."""
    errs = []
    for n in sizes:
        dx = 1.0 / n
        X, Y = _cell_mesh(n)
        q = np.sin(TWO_PI * X) * np.sin(TWO_PI * Y)
        steps = int(np.ceil(t_end / (0.1 * dx * dx / alpha)))
        dt = t_end / steps
        prev = None
        for _ in range(steps):
            rhs = stencils.diffuse_central(np.pad(q, 2, mode="wrap"), alpha, dx)
            q = stencils.integrate_ab2(q, rhs, prev, dt, prev is None)
            prev = rhs
        exact = np.exp(-2.0 * TWO_PI**2 * alpha * t_end) * np.sin(TWO_PI * X) * np.sin(TWO_PI * Y)
        errs.append(np.abs(q - exact).max())
    return errs, observed_orders(errs)


def upwind_errors(sizes=(32, 64, 128), vel=(1.0, 0.5), t_end=0.1, order=1):
    """Linear transport of a smooth periodic field with constant velocity."""
    errs = []
    for n in sizes:
        dx = 1.0 / n
        X, Y = _cell_mesh(n)
        q = np.sin(TWO_PI * X) * np.sin(TWO_PI * Y)
        faces = (np.full((n + 5, n + 4), vel[0]), np.full((n + 4, n + 5), vel[1]))
        steps = int(np.ceil(t_end / (0.2 * dx)))
        dt = t_end / steps
        prev = None
        for _ in range(steps):
            rhs = stencils.advect_upwind(np.pad(q, 2, mode="wrap"), faces, dx, order=order)
            q = stencils.integrate_ab2(q, rhs, prev, dt, prev is None)
            prev = rhs
        exact = np.sin(TWO_PI * (X - vel[0] * t_end)) * np.sin(TWO_PI * (Y - vel[1] * t_end))
        errs.append(np.abs(q - exact).max())
    return errs, observed_orders(errs)


def ab2_errors(steps=(40, 80, 160, 320), lam=-1.0, t_end=2.0):
    """y' = lam*y + cos(t) from y(0) = 1, Euler start step."""
    def exact(t):
        # particular solution plus homogeneous part fixed by y(0) = 1
        a = -lam / (lam * lam + 1.0)
        b = 1.0 / (lam * lam + 1.0)
        return (1.0 - a) * np.exp(lam * t) + a * np.cos(t) + b * np.sin(t)

    errs = []
    for n in steps:
        dt = t_end / n
        y, prev = 1.0, None
        for k in range(n):
            f = lam * y + np.cos(k * dt)
            y = stencils.integrate_ab2(y, f, prev, dt, prev is None)
            prev = f
        errs.append(abs(y - exact(t_end)))
    return errs, observed_orders(errs)


def manufactured_poisson(n, walls=True):
    """Cell samples of p, beta and div(beta grad p) on the unit square.

    Walls: p = cos(pi x) cos(pi y) (zero normal gradient). Otherwise
    p = sin(pi x) sin(pi y) (zero on the boundary). beta = 1 + sin(pi x) sin(pi y)/2.
    """
    X, Y = _cell_mesh(n)
    pi = np.pi
    sx, cx, sy, cy = np.sin(pi * X), np.cos(pi * X), np.sin(pi * Y), np.cos(pi * Y)
    if walls:
        p, px, py = cx * cy, -pi * sx * cy, -pi * cx * sy
    else:
        p, px, py = sx * sy, pi * cx * sy, pi * sx * cy
    beta = 1.0 + 0.5 * sx * sy
    bx, by = 0.5 * pi * cx * sy, 0.5 * pi * sx * cy
    rhs = beta * (-2.0 * pi * pi * p) + bx * px + by * py
    return p, beta, rhs


def poisson_errors(sizes=(32, 64, 128), walls=True, method="mgcg"):
    kind = "noslip_ins" if walls else "outflow_ins"
    errs = []
    for n in sizes:
        grid = make_grid(ncells=(n // 2, n // 2), bc={f: kind for f in ("xl", "xr", "yl", "yr")})
        p, beta, rhs = manufactured_poisson(n, walls)
        res = solve_poisson(grid, beta, rhs, tol=1e-12, method=method, max_iters=200 if method == "mgcg" else 50000)
        err = res.p - p
        if walls:
            err = err - err.mean()
        errs.append(np.abs(err).max())
    return errs, observed_orders(errs)


# -- level-set transport -------------------------------------------------------------

def levelset_transport(n=128, motion="translate", redistance_every=10, radius=0.15):
    """Carry a circular interface with a prescribed velocity field.

    ``translate``: uniform (1, 0) flow on a periodic square, run for one diameter.
    ``rotate``: solid-body rotation about the domain centre, one full turn.
    Returns the relative area change, the centroid error and |grad phi|
    (min, max) in the interface band after a final reinitialisation.
    """
    from composeflow.grid import fill_guard_cells
    from composeflow.multiphase import (MultiphaseConfig, circle_distance, liquid_centroid,
                                        liquid_volume, mph_advect, mph_redistance_if_due)

    nb = 4
    bc = None if motion == "translate" else {f: "slip_ins" for f in ("xl", "xr", "yl", "yr")}
    grid = make_grid(ncells=(n // nb, n // nb), nblocks=(nb, nb), bc=bc,
                     variables=(("dfun", "CENTER"), ("velx", "FACEX"), ("vely", "FACEY")))
    dx = grid.dx
    xc = grid.cell_coords(0)
    if motion == "translate":
        center = (0.3, 0.5)
        grid.scatter("velx", np.ones(grid.global_shape("FACEX")))
        t_end, umax = 2.0 * radius, 1.0
    else:
        center = (0.5, 0.75)
        omega = 2.0 * np.pi
        grid.scatter("velx", np.broadcast_to(-omega * (xc[None, :] - 0.5), grid.global_shape("FACEX")))
        grid.scatter("vely", np.broadcast_to(omega * (xc[:, None] - 0.5), grid.global_shape("FACEY")))
        t_end, umax = 1.0, omega * 0.5 * np.sqrt(2.0)
    X, Y = np.meshgrid(xc, xc, indexing="ij")
    phi0 = circle_distance((X, Y), center, radius)
    grid.scatter("dfun", phi0)
    steps = int(np.ceil(t_end / (0.25 * dx / umax)))
    dt = t_end / steps
    cfg = MultiphaseConfig(redistance_every=redistance_every, redistance_iters=5)
    area0 = liquid_volume(phi0, dx)
    fill_guard_cells(grid)
    for step in range(steps):
        fill_guard_cells(grid, ["dfun"])
        for t in grid.tiles:
            mph_advect(t, dt, step == 0)
        mph_redistance_if_due(grid, step + 1, cfg)
    mph_redistance_if_due(grid, 0, cfg, force=True)
    phi = grid.gather("dfun")
    area = liquid_volume(phi, dx)
    cx, cy = liquid_centroid(phi, (X, Y), dx)
    expected = (center[0] + t_end, center[1]) if motion == "translate" else center
    gx, gy = np.gradient(phi, dx)
    band = np.abs(phi) < 2.5 * dx
    gnorm = np.hypot(gx, gy)[band]
    return {
        "area_change": abs(area - area0) / area0,
        "centroid_error": float(np.hypot(cx - expected[0], cy - expected[1])),
        "grad_min": float(gnorm.min()),
        "grad_max": float(gnorm.max()),
        "steps": steps,
    }

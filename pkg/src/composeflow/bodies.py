"""Rigid Lagrangian bodies and their level-set image on the grid.

A body is a closed polyline (2-D, segments) or a closed triangle mesh (3-D)
with prescribed rigid motion: constant translation velocity plus constant
angular velocity about the initial vertex centroid. Positions are always
evaluated from the reference configuration, so a full turn returns the
nodes to where they started up to rounding.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from composeflow.grid import BlockGrid, TileView
from composeflow.incompns import FACE, VEL


class OpenSurface(ValueError):
    pass


def _rotation(omega, t: float, dims: int) -> np.ndarray:
    if dims == 2:
        th = float(omega) * t
        c, s = np.cos(th), np.sin(th)
        return np.array([[c, -s], [s, c]])
    w = np.asarray(omega, dtype=float)
    speed = float(np.linalg.norm(w))
    if speed == 0.0:
        return np.eye(3)
    k = w / speed
    th = speed * t
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)


@dataclass(frozen=True)
class LagrangianBody:
    ref_nodes: np.ndarray             # (N, d) at t = 0
    elements: np.ndarray              # (M, d) node indices
    velocity: tuple = (0.0, 0.0)
    omega: object = 0.0               # scalar in 2-D, 3-vector in 3-D
    time: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.ref_nodes, dtype=float)
        elems = np.asarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "ref_nodes", nodes)
        object.__setattr__(self, "elements", elems)
        d = nodes.shape[1]
        if d not in (2, 3) or elems.ndim != 2 or elems.shape[1] != d:
            raise ValueError("2-D bodies use segments, 3-D bodies use triangles")
        if elems.size and (elems.min() < 0 or elems.max() >= len(nodes)):
            raise ValueError("element references a missing node")
        if len(self.velocity) != d:
            raise ValueError(f"velocity needs {d} components")
        check_closed(elems, d)

    @property
    def dims(self) -> int:
        return self.ref_nodes.shape[1]

    @property
    def ref_centroid(self) -> np.ndarray:
        return self.ref_nodes.mean(axis=0)

    def centroid(self, t: float | None = None) -> np.ndarray:
        t = self.time if t is None else t
        return self.ref_centroid + np.asarray(self.velocity, dtype=float) * t

    def nodes_at(self, t: float) -> np.ndarray:
        c0 = self.ref_centroid
        R = _rotation(self.omega, t, self.dims)
        return (self.ref_nodes - c0) @ R.T + c0 + np.asarray(self.velocity, dtype=float) * t

    @property
    def nodes(self) -> np.ndarray:
        return self.nodes_at(self.time)

    def velocity_at(self, points: np.ndarray, t: float | None = None) -> np.ndarray:
        """Rigid-body velocity at ``points`` (shape ``(..., d)``)."""
        t = self.time if t is None else t
        r = points - self.centroid(t)
        v = np.broadcast_to(np.asarray(self.velocity, dtype=float), r.shape).copy()
        if self.dims == 2:
            w = float(self.omega)
            v[..., 0] -= w * r[..., 1]
            v[..., 1] += w * r[..., 0]
        else:
            v += np.cross(np.asarray(self.omega, dtype=float), r)
        return v

    @property
    def is_static(self) -> bool:
        return not np.any(np.asarray(self.velocity)) and not np.any(np.asarray(self.omega))


def check_closed(elements: np.ndarray, dims: int):
    if len(elements) == 0:
        raise OpenSurface("body has no elements")
    if dims == 2:
        deg = Counter(elements.ravel().tolist())
        bad = [n for n, c in deg.items() if c != 2]
        if bad:
            raise OpenSurface(f"polyline is not closed at nodes {bad[:5]}")
    else:
        edges = Counter()
        for tri in elements:
            for i in range(3):
                a, b = int(tri[i]), int(tri[(i + 1) % 3])
                edges[(min(a, b), max(a, b))] += 1
        bad = [e for e, c in edges.items() if c != 2]
        if bad:
            raise OpenSurface(f"{len(bad)} edges are not shared by exactly two triangles")


def body_advance(body: LagrangianBody, t: float, dt: float) -> LagrangianBody:
    """The body moved rigidly from time ``t`` to ``t + dt``."""
    return replace(body, time=t + dt)


def circle_body(center, radius: float, nseg: int = 256, velocity=(0.0, 0.0), omega: float = 0.0) -> LagrangianBody:
    th = 2.0 * np.pi * np.arange(nseg) / nseg
    nodes = np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)
    elems = np.stack([np.arange(nseg), (np.arange(nseg) + 1) % nseg], axis=1)
    return LagrangianBody(nodes, elems, tuple(velocity), omega)


def sphere_body(center, radius: float, refine: int = 2, velocity=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0)) -> LagrangianBody:
    """Icosphere: an icosahedron subdivided ``refine`` times and projected to the sphere."""
    p = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(refine):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    nodes = np.asarray(center, dtype=float) + radius * np.array(verts)
    return LagrangianBody(nodes, np.array(faces), tuple(velocity), np.asarray(omega, dtype=float))


def read_body_file(path, velocity=None, omega=0.0) -> LagrangianBody:
    """``NODES n`` then n coordinate lines, ``ELEMS m`` then m index lines."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    head = lines[0].split()
    if head[0] != "NODES":
        raise ValueError(f"{path}: first line must be 'NODES n'")
    n = int(head[1])
    nodes = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + n]])
    head = lines[1 + n].split()
    if head[0] != "ELEMS":
        raise ValueError(f"{path}: expected 'ELEMS m' after the node list")
    m = int(head[1])
    elems = np.array([[int(v) for v in ln.split()] for ln in lines[2 + n:2 + n + m]])
    d = nodes.shape[1]
    velocity = tuple(velocity) if velocity is not None else (0.0,) * d
    return LagrangianBody(nodes, elems, velocity[:d], omega)


def write_body_file(body: LagrangianBody, path):
    out = [f"NODES {len(body.ref_nodes)}"]
    out += [" ".join(repr(float(v)) for v in row) for row in body.ref_nodes]
    out.append(f"ELEMS {len(body.elements)}")
    out += [" ".join(str(int(v)) for v in row) for row in body.elements]
    Path(path).write_text("\n".join(out) + "\n")


# -- distance queries ----------------------------------------------------------

def _segment_distance(P, A, B):
    AB = B - A
    L2 = np.einsum("md,md->m", AB, AB)
    AP = P[:, None, :] - A[None, :, :]
    t = np.clip(np.einsum("kmd,md->km", AP, AB) / L2, 0.0, 1.0)
    diff = AP - t[..., None] * AB[None]
    return np.sqrt(np.einsum("kmd,kmd->km", diff, diff).min(axis=1))


def _inside_polygon(P, A, B):
    ay, by = A[None, :, 1], B[None, :, 1]
    py = P[:, None, 1]
    crosses = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = A[None, :, 0] + (py - ay) * (B[None, :, 0] - A[None, :, 0]) / (by - ay)
    hits = crosses & (xint > P[:, None, 0])
    return (hits.sum(axis=1) % 2) == 1


def _triangle_distance(P, A, B, C):
    """Point-triangle distances (closest-point regions), minimised over triangles."""
    ab, ac = B - A, C - A
    ap = P[:, None, :] - A[None]
    bp = P[:, None, :] - B[None]
    cp = P[:, None, :] - C[None]
    d1 = np.einsum("kmd,md->km", ap, ab)
    d2 = np.einsum("kmd,md->km", ap, ac)
    d3 = np.einsum("kmd,md->km", bp, ab)
    d4 = np.einsum("kmd,md->km", bp, ac)
    d5 = np.einsum("kmd,md->km", cp, ab)
    d6 = np.einsum("kmd,md->km", cp, ac)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        closest = A[None] + v[..., None] * ab[None] + w[..., None] * ac[None]
        # vertex regions
        closest = np.where(((d1 <= 0) & (d2 <= 0))[..., None], A[None], closest)
        closest = np.where(((d3 >= 0) & (d4 <= d3))[..., None], B[None], closest)
        closest = np.where(((d6 >= 0) & (d5 <= d6))[..., None], C[None], closest)
        # edge regions
        e_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t_ab = d1 / (d1 - d3)
        closest = np.where(e_ab[..., None], A[None] + t_ab[..., None] * ab[None], closest)
        e_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t_ac = d2 / (d2 - d6)
        closest = np.where(e_ac[..., None], A[None] + t_ac[..., None] * ac[None], closest)
        e_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        closest = np.where(e_bc[..., None], B[None] + t_bc[..., None] * (C - B)[None], closest)
    diff = P[:, None, :] - closest
    return np.sqrt(np.einsum("kmd,kmd->km", diff, diff).min(axis=1))


_RAY = np.array([1.0, 0.0017320508, 0.0014142136])


def _inside_mesh(P, A, B, C):
    """Ray parity along a fixed, slightly skewed direction (Moller-Trumbore)."""
    e1, e2 = B - A, C - A
    h = np.cross(_RAY, e2)
    det = np.einsum("md,md->m", e1, h)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = P[:, None, :] - A[None]
    u = np.einsum("kmd,md->km", s, h) * inv
    q = np.cross(s, e1[None])
    v = np.einsum("d,kmd->km", _RAY, q) * inv
    t = np.einsum("md,kmd->km", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return (hit.sum(axis=1) % 2) == 1


def signed_distance(body: LagrangianBody, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Exact signed distance to the body surface, negative inside."""
    pts = np.asarray(points, dtype=float).reshape(-1, body.dims)
    nodes = body.nodes
    el = body.elements
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        P = pts[s:s + chunk]
        if body.dims == 2:
            A, B = nodes[el[:, 0]], nodes[el[:, 1]]
            d = _segment_distance(P, A, B)
            inside = _inside_polygon(P, A, B)
        else:
            A, B, C = nodes[el[:, 0]], nodes[el[:, 1]], nodes[el[:, 2]]
            d = _triangle_distance(P, A, B, C)
            inside = _inside_mesh(P, A, B, C)
        out[s:s + chunk] = np.where(inside, -d, d)
    return out.reshape(np.shape(points)[:-1])


def body_levelset(body: LagrangianBody, coords, dx: float, band_cells: float = 6.0) -> np.ndarray:
    """Signed distance on a mesh of points, clamped to +-band outside the narrow band."""
    bound = band_cells * dx
    pts = np.stack([np.asarray(c, dtype=float) for c in coords], axis=-1)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, body.dims)
    # cheap bounding-box prefilter: only points near the body need the exact search
    lo = body.nodes.min(axis=0) - bound
    hi = body.nodes.max(axis=0) + bound
    near = np.all((flat >= lo) & (flat <= hi), axis=1)
    out = np.full(len(flat), bound)
    if near.any():
        d = signed_distance(body, flat[near])
        out[near] = np.clip(d, -bound, bound)
    return out.reshape(shape)


def ib_map_to_levelset(body: LagrangianBody, grid: BlockGrid, band_cells: float = 6.0, name: str = "lmda"):
    """Fill ``name`` on every tile, guard layers included."""
    if name not in grid:
        grid.add_variable(name, "CENTER", "plot")
    for t in grid.tiles:
        t.data[name][...] = body_levelset(body, t.mesh("CENTER"), grid.dx, band_cells)


def ib_forcing(tile: TileView, body: LagrangianBody, t: float, name: str = "lmda", dt: float = 0.0):
    """Direct-forcing weights and target velocities for the predictor.

    Faces with ``lambda <= 0`` take the rigid-body velocity; faces within one
    cell outside the surface blend linearly towards the fluid value.

    With ``dt > 0`` the target is raised by ``dt * beta * grad(p)`` from the
    current pressure, which the projection then takes away again, so the
    slip left inside the body is only the change in pressure gradient over
    one step.
    """
    lam = tile[name]
    g = tile.nguard
    dx = tile.dx
    for a in range(tile.dims):
        cen = FACE[a]
        n = tile.interior(VEL[a]).shape
        lo = tuple(slice(g - (1 if b == a else 0), g - (1 if b == a else 0) + n[b]) for b in range(tile.dims))
        hi = tuple(slice(g, g + n[b]) for b in range(tile.dims))
        lam_f = 0.5 * (lam[lo] + lam[hi])
        w = np.clip(1.0 - np.maximum(lam_f, 0.0) / dx, 0.0, 1.0)
        coords = [c[hi] for c in tile.mesh(cen)]
        pts = np.stack(coords, axis=-1)
        u_body = body.velocity_at(pts, t)[..., a]
        if dt > 0.0 and "pres" in tile:
            p = tile["pres"]
            grad = (p[hi] - p[lo]) / dx
            if "dens" in tile:
                grad = grad * 2.0 / (tile["dens"][lo] + tile["dens"][hi])
            u_body = u_body + dt * grad
        tile.work["ib_w_" + VEL[a]] = w
        tile.work["ib_u_" + VEL[a]] = u_body


def interior_slip(grid: BlockGrid, body: LagrangianBody | None = None, t: float = 0.0,
                  name: str = "lmda", depth_cells: float = 1.0) -> float:
    """Largest ``|u - u_body|`` over faces more than ``depth_cells`` inside the body.

    Without ``body`` the body is taken to be at rest.
    """
    worst = 0.0
    g = grid.nguard
    for tile in grid.tiles:
        lam = tile[name]
        for a in range(tile.dims):
            n = tile.interior(VEL[a]).shape
            lo = tuple(slice(g - (1 if b == a else 0), g - (1 if b == a else 0) + n[b]) for b in range(tile.dims))
            hi = tuple(slice(g, g + n[b]) for b in range(tile.dims))
            lam_f = 0.5 * (lam[lo] + lam[hi])
            inside = lam_f < -depth_cells * grid.dx
            if not inside.any():
                continue
            u = tile.interior(VEL[a])[inside]
            if body is not None:
                pts = np.stack([c[hi][inside] for c in tile.mesh(FACE[a])], axis=-1)
                u = u - body.velocity_at(pts, t)[..., a]
            worst = max(worst, float(np.abs(u).max()))
    return worst

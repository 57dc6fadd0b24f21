"""Point-by-point reference implementations used to check the vectorised kernels.

These are written for clarity, one grid point at a time, and share no code
with the package. Arrays follow the package convention: ``g`` guard layers
on every side, face arrays one point longer along their normal axis.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def _interior(shape, g):
    return [range(g, s - g) for s in shape]


def _shift(idx, axis, by):
    out = list(idx)
    out[axis] += by
    return tuple(out)


def face_velocity_at(vel, comp, face_axis, idx):
    """Average of velocity component ``comp`` onto the point ``idx`` of a field
    with normal ``face_axis`` (None for cell centres)."""
    nd = len(idx)
    choices = []
    for a in range(nd):
        if a == comp:
            choices.append((0,) if face_axis == a else (0, 1))
        else:
            choices.append((-1, 0) if face_axis == a else (0,))
    vals = []
    for offs in itertools.product(*choices):
        p = tuple(i + o for i, o in zip(idx, offs))
        vals.append(vel[comp][p])
    return sum(vals) / len(vals)


def _minmod_abs(a, b):
    return a if abs(a) <= abs(b) else b


def upwind(q, vel, dx, face_axis=None, g=2, order=1):
    out = np.zeros(tuple(s - 2 * g for s in q.shape))
    for idx in itertools.product(*_interior(q.shape, g)):
        total = 0.0
        for b in range(q.ndim):
            u = face_velocity_at(vel, b, face_axis, idx)
            c = q[idx]
            m = q[_shift(idx, b, -1)]
            p = q[_shift(idx, b, 1)]
            back = (c - m) / dx
            fwd = (p - c) / dx
            if order == 2:
                mm = q[_shift(idx, b, -2)]
                pp = q[_shift(idx, b, 2)]
                mid = p - 2 * c + m
                back += 0.5 * _minmod_abs(c - 2 * m + mm, mid) / dx
                fwd -= 0.5 * _minmod_abs(mid, pp - 2 * p + c) / dx
            if u > 0:
                total -= u * back
            elif u < 0:
                total -= u * fwd
        out[tuple(i - g for i in idx)] = total
    return out


def diffusion(q, K, dx, harmonic=True, g=2):
    """div(K grad q) with K constant (float) or pointwise (array)."""
    out = np.zeros(tuple(s - 2 * g for s in q.shape))
    for idx in itertools.product(*_interior(q.shape, g)):
        total = 0.0
        for a in range(q.ndim):
            for side in (-1, 1):
                nb = _shift(idx, a, side)
                if isinstance(K, float):
                    k = K
                elif harmonic:
                    k = 2 * K[idx] * K[nb] / (K[idx] + K[nb])
                else:
                    k = 0.5 * (K[idx] + K[nb])
                total += k * (q[nb] - q[idx]) / dx / dx
        out[tuple(i - g for i in idx)] = total
    return out


def curvature(phi, dx, g=2):
    nd = phi.ndim
    out = np.zeros(tuple(s - 2 * g for s in phi.shape))
    for idx in itertools.product(*_interior(phi.shape, g)):
        grad = [(phi[_shift(idx, a, 1)] - phi[_shift(idx, a, -1)]) / (2 * dx) for a in range(nd)]
        hess = [[0.0] * nd for _ in range(nd)]
        for a in range(nd):
            hess[a][a] = (phi[_shift(idx, a, 1)] - 2 * phi[idx] + phi[_shift(idx, a, -1)]) / dx**2
            for b in range(a + 1, nd):
                def at(sa, sb):
                    return phi[_shift(_shift(idx, a, sa), b, sb)]
                hess[a][b] = hess[b][a] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * dx * dx)
        g2 = sum(x * x for x in grad)
        # div(n) = (|g|^2 tr(H) - g.H.g) / |g|^3
        num = g2 * sum(hess[a][a] for a in range(nd))
        num -= sum(grad[a] * hess[a][b] * grad[b] for a in range(nd) for b in range(nd))
        norm = max(math.sqrt(g2), 1e-12)
        k = num / norm**3
        out[tuple(i - g for i in idx)] = min(max(k, -1 / dx), 1 / dx)
    return out


def face_to_center(vel, g=2):
    out = []
    for a, u in enumerate(vel):
        shape = [s - 2 * g for s in u.shape]
        shape[a] -= 1
        res = np.zeros(shape)
        for idx in itertools.product(*[range(n) for n in shape]):
            p = tuple(i + g for i in idx)
            res[idx] = 0.5 * (u[p] + u[_shift(p, a, 1)])
        out.append(res)
    return out


def momentum_advection(vel, dx, g=2):
    """-div(u u_a) at face points with centrally averaged fluxes."""
    nd = len(vel)
    out = []
    for a in range(nd):
        ua = vel[a]
        res = np.zeros(tuple(s - 2 * g for s in ua.shape))
        for idx in itertools.product(*_interior(ua.shape, g)):
            total = 0.0
            for b in range(nd):
                if b == a:
                    hi = 0.5 * (ua[idx] + ua[_shift(idx, a, 1)])
                    lo = 0.5 * (ua[_shift(idx, a, -1)] + ua[idx])
                    total -= (hi * hi - lo * lo) / dx
                else:
                    ub = vel[b]
                    # b-velocity at the two b-faces of this a-face control volume
                    ub_lo = 0.5 * (ub[_shift(idx, a, -1)] + ub[idx])
                    ub_hi = 0.5 * (ub[_shift(_shift(idx, a, -1), b, 1)] + ub[_shift(idx, b, 1)])
                    ua_lo = 0.5 * (ua[_shift(idx, b, -1)] + ua[idx])
                    ua_hi = 0.5 * (ua[idx] + ua[_shift(idx, b, 1)])
                    total -= (ua_hi * ub_hi - ua_lo * ub_lo) / dx
            res[tuple(i - g for i in idx)] = total
        out.append(res)
    return out


def random_tile(rng, n=8, g=2, nd=3):
    """Padded cell field, face velocities and a positive coefficient field."""
    cell = tuple([n + 2 * g] * nd)
    q = rng.uniform(-1.0, 1.0, cell)
    vel = []
    for a in range(nd):
        shape = list(cell)
        shape[a] += 1
        vel.append(rng.uniform(-1.0, 1.0, shape))
    K = rng.uniform(0.5, 2.0, cell)
    return q, tuple(vel), K


def polygon_signed_distance(point, nodes, segments):
    """Distance to a closed polyline, negative inside (winding number), one segment at a time."""
    px, py = float(point[0]), float(point[1])
    best = math.inf
    winding = 0.0
    for i, j in segments:
        ax, ay = map(float, nodes[i])
        bx, by = map(float, nodes[j])
        ex, ey = bx - ax, by - ay
        s = ((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey)
        s = min(1.0, max(0.0, s))
        best = min(best, math.hypot(px - (ax + s * ex), py - (ay + s * ey)))
        winding += math.atan2((ax - px) * (by - py) - (ay - py) * (bx - px),
                              (ax - px) * (bx - px) + (ay - py) * (by - py))
    return -best if abs(winding) > math.pi else best

"""Pointwise finite-difference kernels on guard-padded tile arrays.

Every kernel takes arrays that carry ``g`` guard layers on each side and
returns a result shaped like the interior of its target centering. Face
velocities are passed as a tuple ``(u, v[, w])`` of FACEX/FACEY/FACEZ
arrays padded with the same guard width.
"""
from __future__ import annotations

import itertools

import numpy as np

from composeflow.grid import face_axis


def interior_shape(arr: np.ndarray, g: int) -> tuple[int, ...]:
    return tuple(n - 2 * g for n in arr.shape)


def _window(g, n, axis, shift, ndim):
    """Slice of the interior (length ``n`` per axis) shifted by ``shift`` along ``axis``."""
    out = []
    for a in range(ndim):
        s = shift if a == axis else 0
        out.append(slice(g + s, g + s + n[a]))
    return tuple(out)


def velocity_at(vel_b: np.ndarray, comp: int, target: str, g: int, n) -> np.ndarray:
    """Velocity component ``comp`` averaged onto the interior points of ``target`` centering."""
    ndim = vel_b.ndim
    fa = face_axis(target)
    per_axis = []
    for a in range(ndim):
        if a == comp:
            per_axis.append((0,) if fa == a else (0, 1))
        else:
            per_axis.append((-1, 0) if fa == a else (0,))
    total = None
    count = 0
    for offs in itertools.product(*per_axis):
        sl = tuple(slice(g + o, g + o + n[a]) for a, o in enumerate(offs))
        total = vel_b[sl].copy() if total is None else total + vel_b[sl]
        count += 1
    if count > 1:
        total *= 1.0 / count
    return total


def _minmod_abs(a, b):
    return np.where(np.abs(a) <= np.abs(b), a, b)


def one_sided(q: np.ndarray, axis: int, dx: float, g: int, order: int = 1):
    """Backward and forward differences of ``q`` at its interior points."""
    n = interior_shape(q, g)
    nd = q.ndim
    qc = q[_window(g, n, axis, 0, nd)]
    qm = q[_window(g, n, axis, -1, nd)]
    qp = q[_window(g, n, axis, 1, nd)]
    dm = (qc - qm) / dx
    dp = (qp - qc) / dx
    if order == 2:
        qmm = q[_window(g, n, axis, -2, nd)]
        qpp = q[_window(g, n, axis, 2, nd)]
        c0 = qp - 2.0 * qc + qm
        cm = qc - 2.0 * qm + qmm
        cp = qpp - 2.0 * qp + qc
        dm = dm + 0.5 * _minmod_abs(cm, c0) / dx
        dp = dp - 0.5 * _minmod_abs(c0, cp) / dx
    elif order != 1:
        raise ValueError("order must be 1 or 2")
    return dm, dp


def advect_upwind(q: np.ndarray, vel, dx: float, centering: str = "CENTER", g: int = 2,
                  order: int = 1) -> np.ndarray:
    """Upwind ``-(u . grad q)`` at the interior points of ``q``.

    The difference along each axis is taken on the side the flow comes
    from; a zero velocity component contributes nothing. ``order=2``
    switches the one-sided differences to their ENO2 form.
    """
    if len(vel) < q.ndim:
        raise ValueError(f"need {q.ndim} velocity components, got {len(vel)}")
    fa = face_axis(centering)
    n = interior_shape(q, g)
    if fa is not None and q.shape[fa] != vel[fa].shape[fa]:
        raise ValueError(f"array shape {q.shape} does not match centering {centering}")
    if fa is None and q.shape != tuple(s - (1 if a == 0 else 0) for a, s in enumerate(vel[0].shape)):
        raise ValueError(f"array shape {q.shape} does not match centering {centering}")
    out = np.zeros(n)
    for b in range(q.ndim):
        ub = velocity_at(vel[b], b, centering, g, n)
        dm, dp = one_sided(q, b, dx, g, order)
        flux = np.where(ub > 0.0, ub * dm, np.where(ub < 0.0, ub * dp, 0.0))
        out -= flux
    return out


def diffuse_central(q: np.ndarray, K, dx: float, centering: str = "CENTER", g: int = 2) -> np.ndarray:
    """Flux-form ``div(K grad q)``.

    ``K`` is a constant or an array co-located with ``q``. Between two
    points the coefficient is the harmonic mean for cell-centred ``q`` and
    the arithmetic mean for face-centred ``q``.
    """
    n = interior_shape(q, g)
    nd = q.ndim
    scalar = np.isscalar(K) or np.ndim(K) == 0
    if scalar:
        if not K > 0.0:
            raise ValueError("diffusivity must be positive")
    else:
        K = np.asarray(K)
        if K.shape != q.shape:
            raise ValueError("diffusivity array must match the field shape")
        if np.any(K[tuple(slice(g - 1, s - g + 1) for s in q.shape)] <= 0.0):
            raise ValueError("diffusivity must be positive")
    harmonic = face_axis(centering) is None
    out = np.zeros(n)
    for a in range(nd):
        # fluxes through the n[a]+1 faces bounding the interior along a
        ext = list(n)
        ext[a] += 1
        lo = tuple(slice(g - 1, g - 1 + ext[b]) if b == a else slice(g, g + n[b]) for b in range(nd))
        hi = tuple(slice(g, g + ext[b]) if b == a else slice(g, g + n[b]) for b in range(nd))
        grad = (q[hi] - q[lo]) / dx
        if scalar:
            flux = K * grad
        else:
            k0, k1 = K[lo], K[hi]
            kf = 2.0 * k0 * k1 / (k0 + k1) if harmonic else 0.5 * (k0 + k1)
            flux = kf * grad
        up = tuple(slice(1, None) if b == a else slice(None) for b in range(nd))
        dn = tuple(slice(0, -1) if b == a else slice(None) for b in range(nd))
        out += (flux[up] - flux[dn]) / dx
    return out


def integrate_ab2(q, rhs_now, rhs_prev, dt: float, first_step: bool):
    """Second-order Adams-Bashforth update, forward Euler on the first step."""
    if first_step:
        return q + dt * rhs_now
    return q + dt * (1.5 * rhs_now - 0.5 * rhs_prev)


# -- level-set helpers ------------------------------------------------------

def smoothed_heaviside(phi, eps: float):
    phi = np.asarray(phi, dtype=float)
    x = np.clip(phi / eps, -1.0, 1.0)
    return np.where(phi <= -eps, 0.0, np.where(phi >= eps, 1.0, 0.5 * (1.0 + x + np.sin(np.pi * x) / np.pi)))


def smoothed_delta(phi, eps: float):
    phi = np.asarray(phi, dtype=float)
    x = np.clip(phi / eps, -1.0, 1.0)
    return np.where(np.abs(phi) >= eps, 0.0, 0.5 / eps * (1.0 + np.cos(np.pi * x)))


def curvature(phi: np.ndarray, dx: float, g: int = 2) -> np.ndarray:
    """``div(grad phi / |grad phi|)`` by central differences, clamped to +-1/dx."""
    n = interior_shape(phi, g)
    nd = phi.ndim

    def at(*shift):
        return phi[tuple(slice(g + s, g + s + n[a]) for a, s in enumerate(shift))]

    zero = (0,) * nd

    def unit(a, s):
        v = [0] * nd
        v[a] = s
        return tuple(v)

    c = at(*zero)
    d1 = []
    d2 = {}
    for a in range(nd):
        p, m = at(*unit(a, 1)), at(*unit(a, -1))
        d1.append((p - m) / (2.0 * dx))
        d2[a, a] = (p - 2.0 * c + m) / (dx * dx)
    for a in range(nd):
        for b in range(a + 1, nd):
            s_pp = [0] * nd
            s_pp[a], s_pp[b] = 1, 1
            s_mm = [0] * nd
            s_mm[a], s_mm[b] = -1, -1
            s_pm = [0] * nd
            s_pm[a], s_pm[b] = 1, -1
            s_mp = [0] * nd
            s_mp[a], s_mp[b] = -1, 1
            d2[a, b] = (at(*s_pp) - at(*s_pm) - at(*s_mp) + at(*s_mm)) / (4.0 * dx * dx)
    grad2 = d1[0] * d1[0]
    for a in range(1, nd):
        grad2 = grad2 + d1[a] * d1[a]
    num = np.zeros(n)
    for a in range(nd):
        for b in range(nd):
            if a == b:
                num += d2[a, a] * (grad2 - d1[a] * d1[a])
            elif a < b:
                num -= 2.0 * d1[a] * d1[b] * d2[a, b]
    norm = np.maximum(np.sqrt(grad2), 1e-12)
    kappa = num / (norm * norm * norm)
    lim = 1.0 / dx
    return np.clip(kappa, -lim, lim)


def _pad_for_redistance(phi, bcs):
    out = phi
    for a in range(phi.ndim):
        if bcs[a] == "periodic":
            out = np.concatenate([np.take(out, [-1], axis=a), out, np.take(out, [0], axis=a)], axis=a)
        else:
            first = np.take(out, [0], axis=a)
            second = np.take(out, [1], axis=a)
            last = np.take(out, [-1], axis=a)
            before = np.take(out, [-2], axis=a)
            out = np.concatenate([2.0 * first - second, out, 2.0 * last - before], axis=a)
    return out


def redistance(phi: np.ndarray, dx: float, iters: int = 20, band_width: float | None = None,
               bcs=None) -> np.ndarray:
    """Reinitialise ``phi`` towards a signed distance function.

    Pseudo-time Godunov iteration of ``phi_t = sign(phi0)(1 - |grad phi|)``
    with step ``dx/2``. Cells next to a sign change use the subcell
    anchoring of Russo and Smereka, which keeps the zero contour in place.
    ``phi`` is a global array without guards; ``bcs`` gives ``periodic`` or
    ``extrapolate`` per axis. With ``band_width`` (cells) only points with
    ``|phi0| < band_width * dx`` are updated.
    """
    phi0 = np.asarray(phi, dtype=float)
    nd = phi0.ndim
    bcs = tuple(bcs) if bcs is not None else ("extrapolate",) * nd
    if not (np.any(phi0 > 0.0) and np.any(phi0 < 0.0)):
        raise ValueError("level set has no interface")
    sgn = np.sign(phi0)
    P0 = _pad_for_redistance(phi0, bcs)

    def sh(P, a, s):
        return P[tuple(slice(1 + s, P.shape[b] - 1 + s) if b == a else slice(1, -1) for b in range(nd))]

    # subcell distance for cells adjacent to the interface
    near = np.zeros(phi0.shape, dtype=bool)
    central = np.zeros(phi0.shape)
    fwd = np.zeros(phi0.shape)
    bwd = np.zeros(phi0.shape)
    for a in range(nd):
        p, m = sh(P0, a, 1), sh(P0, a, -1)
        near |= (phi0 * p < 0.0) | (phi0 * m < 0.0)
        central += ((p - m) / (2.0 * dx)) ** 2
        fwd += ((p - phi0) / dx) ** 2
        bwd += ((phi0 - m) / dx) ** 2
    robust = np.maximum(np.maximum(np.sqrt(central), np.sqrt(fwd)), np.maximum(np.sqrt(bwd), 1e-12))
    # the central slope is second-order accurate; the one-sided ones only
    # take over where the level set is badly stretched or flattened
    cen = np.sqrt(central)
    slope = np.where((cen > 0.5) & (cen < 2.0), cen, robust)
    dist = phi0 / slope
    active = np.ones(phi0.shape, dtype=bool)
    if band_width is not None:
        active = np.abs(phi0) < band_width * dx
    dtau = 0.5 * dx
    pos = sgn > 0.0

    def rate(cur):
        P = _pad_for_redistance(_pad_for_redistance(cur, bcs), bcs)
        c = P[tuple(slice(2, -2) for _ in range(nd))]
        g2 = np.zeros(phi0.shape)
        for a in range(nd):
            def s2(k):
                return P[tuple(slice(2 + k, P.shape[b] - 2 + k) if b == a else slice(2, -2) for b in range(nd))]
            m1, p1 = s2(-1), s2(1)
            d2m = (c - 2.0 * m1 + s2(-2)) / (dx * dx)
            d2c = (p1 - 2.0 * c + m1) / (dx * dx)
            d2p = (s2(2) - 2.0 * p1 + c) / (dx * dx)
            # second-order ENO one-sided differences
            dm = (c - m1) / dx + 0.5 * dx * _minmod_abs(d2m, d2c)
            dp = (p1 - c) / dx - 0.5 * dx * _minmod_abs(d2c, d2p)
            gp = np.maximum(np.maximum(dm, 0.0) ** 2, np.minimum(dp, 0.0) ** 2)
            gn = np.maximum(np.minimum(dm, 0.0) ** 2, np.maximum(dp, 0.0) ** 2)
            g2 += np.where(pos, gp, gn)
        far = -sgn * (np.sqrt(g2) - 1.0)
        anchored = -(sgn * np.abs(cur) - dist) / dx
        return np.where(active, np.where(near, anchored, far), 0.0)

    cur = phi0.copy()
    for _ in range(iters):
        # two-stage TVD Runge-Kutta in pseudo-time
        stage = cur + dtau * rate(cur)
        cur = 0.5 * (cur + stage + dtau * rate(stage))
    return cur

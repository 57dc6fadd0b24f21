"""Variable-coefficient Poisson solver on the assembled cell-centred grid.

Solves ``div(beta grad p) = rhs`` with the standard 5/7-point flux form.
Two methods:

``mgcg``
    conjugate gradients preconditioned by one symmetric geometric
    multigrid V-cycle (red-black Gauss-Seidel smoothing, cell averaging
    restriction, piecewise-constant prolongation, dense coarsest solve).
``sor``
    plain red-black successive over-relaxation.

Boundary kinds per axis side are ``periodic``, ``neumann`` (zero flux) or
``dirichlet`` (p = 0 on the boundary face). When no Dirichlet side exists
the operator is singular: the rhs mean is removed and p is returned with
zero mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from composeflow import kernels


class NonConvergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass
class PoissonResult:
    p: np.ndarray
    residual: float          # relative L-inf of the true residual
    residual_abs: float
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = True


def harmonic_faces(beta: np.ndarray, bcs) -> list[np.ndarray]:
    """Face coefficients from cell values: harmonic mean of the two neighbours.

    Non-periodic boundary faces take the adjacent cell value.
    """
    out = []
    for a in range(beta.ndim):
        lo = np.take(beta, range(0, beta.shape[a] - 1), axis=a)
        hi = np.take(beta, range(1, beta.shape[a]), axis=a)
        inner = 2.0 * lo * hi / (lo + hi)
        if bcs[a][0] == "periodic":
            first = np.take(beta, [0], axis=a)
            last = np.take(beta, [-1], axis=a)
            wrap = 2.0 * first * last / (first + last)
            b_lo = b_hi = wrap
        else:
            b_lo = np.take(beta, [0], axis=a)
            b_hi = np.take(beta, [-1], axis=a)
        out.append(np.concatenate([b_lo, inner, b_hi], axis=a))
    return out


def _to3(a: np.ndarray) -> np.ndarray:
    return a if a.ndim == 3 else a[..., None]


class _Level:
    def __init__(self, shape, h, coeffs, periodic):
        self.shape = shape
        self.h2 = h * h
        self.bx, self.by, self.bz = (np.ascontiguousarray(c) for c in coeffs)
        self.periodic = periodic
        self.ncells = int(np.prod(shape))
        self.dense_pinv = None

    def padded(self, x=None):
        pp = np.zeros(tuple(n + 2 for n in self.shape))
        if x is not None:
            pp[1:-1, 1:-1, 1:-1] = x
        return pp

    def refresh(self, pp):
        for a in range(3):
            if self.periodic[a]:
                n = self.shape[a]
                pp[_s(a, 0)] = pp[_s(a, n)]
                pp[_s(a, n + 1)] = pp[_s(a, 1)]

    def smooth(self, pp, f, sweeps, colors, omega=1.0):
        for _ in range(sweeps):
            for c in colors:
                kernels.rb_sweep(pp, self.bx, self.by, self.bz, f, self.h2, omega, c)
                self.refresh(pp)

    def residual(self, pp, f):
        out = np.empty(self.shape)
        kernels.residual(pp, self.bx, self.by, self.bz, f, self.h2, out)
        return out

    def apply(self, x):
        """A x (negative semi-definite operator)."""
        pp = self.padded(x)
        self.refresh(pp)
        return -self.residual(pp, np.zeros(self.shape))


def _s(axis, idx):
    out = [slice(None)] * 3
    out[axis] = idx
    return tuple(out)


class PoissonProblem:
    """Discrete operator, boundary handling and multigrid hierarchy for one coefficient set."""

    dense_limit = 1024

    def __init__(self, shape, h, bcs, faces=None):
        shape3 = tuple(shape) + (1,) * (3 - len(shape))
        self.ndim = len(shape)
        self.shape = shape3
        self.h = h
        bcs = list(bcs) + [("neumann", "neumann")] * (3 - len(bcs))
        self.bcs = bcs
        self.singular = not any("dirichlet" in pair for pair in bcs)
        if faces is None:
            faces = harmonic_faces(np.ones(shape), bcs[: self.ndim])
        coeffs = [_to3(np.asarray(f, dtype=float)).copy() for f in faces]
        if self.ndim == 2:
            coeffs.append(np.zeros(shape3[:2] + (2,)))
        periodic = []
        for a in range(3):
            lo, hi = bcs[a]
            c = coeffs[a]
            for side, kind in ((0, lo), (-1, hi)):
                if kind == "neumann":
                    c[_s(a, side)] = 0.0
                elif kind == "dirichlet":
                    c[_s(a, side)] *= 2.0
            periodic.append(lo == "periodic")
        self.levels = [_Level(shape3, h, coeffs, periodic)]
        self._build_hierarchy()

    def _build_hierarchy(self):
        while True:
            lev = self.levels[-1]
            axes = [a for a in range(3) if lev.shape[a] > 1]
            if not axes or any(lev.shape[a] % 2 or lev.shape[a] < 4 for a in axes):
                break
            cshape = tuple(n // 2 if a in axes else n for a, n in enumerate(lev.shape))
            coeffs = []
            for a, b in enumerate((lev.bx, lev.by, lev.bz)):
                c = b[_s(a, slice(None, None, 2))] if a in axes else b
                for o in axes:
                    if o != a:
                        c = 0.5 * (c[_s(o, slice(0, None, 2))] + c[_s(o, slice(1, None, 2))])
                coeffs.append(c)
            self.levels.append(_Level(cshape, np.sqrt(lev.h2) * 2.0, coeffs, lev.periodic))
        bottom = self.levels[-1]
        if bottom.ncells <= self.dense_limit:
            n = bottom.ncells
            mat = np.empty((n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = 1.0
                mat[:, j] = bottom.apply(e.reshape(bottom.shape)).ravel()
            bottom.dense_pinv = np.linalg.pinv(mat)

    # -- multigrid ---------------------------------------------------------
    def _vcycle(self, level: int, f: np.ndarray) -> np.ndarray:
        lev = self.levels[level]
        if level == len(self.levels) - 1:
            if lev.dense_pinv is not None:
                return (lev.dense_pinv @ f.ravel()).reshape(lev.shape)
            pp = lev.padded()
            lev.smooth(pp, f, 40, (0, 1))
            lev.smooth(pp, f, 40, (1, 0))
            return pp[1:-1, 1:-1, 1:-1].copy()
        pp = lev.padded()
        lev.smooth(pp, f, 2, (0, 1))
        r = lev.residual(pp, f)
        coarse = self.levels[level + 1]
        fac = [lev.shape[a] // coarse.shape[a] for a in range(3)]
        rc = r.reshape(coarse.shape[0], fac[0], coarse.shape[1], fac[1], coarse.shape[2], fac[2]).mean(axis=(1, 3, 5))
        ec = self._vcycle(level + 1, rc)
        for a in range(3):
            if fac[a] > 1:
                ec = np.repeat(ec, fac[a], axis=a)
        pp[1:-1, 1:-1, 1:-1] += ec
        lev.refresh(pp)
        lev.smooth(pp, f, 2, (1, 0))
        return pp[1:-1, 1:-1, 1:-1].copy()

    def precondition(self, r):
        z = self._vcycle(0, r)
        if self.singular:
            z -= z.mean()
        return z

    # -- public ------------------------------------------------------------
    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.levels[0].apply(_to3(p)).reshape(p.shape)

    def solve(self, rhs, tol=1e-9, max_iters=200, x0=None, atol=None, method="mgcg", omega=1.7):
        """Iterate until ``max|residual| <= tol * max|rhs|``, or ``<= atol`` when given.

        An absolute target replaces the relative one: a right-hand side that is
        already at round-off level would otherwise ask for an unreachable residual.
        """
        shape = rhs.shape
        f = _to3(np.asarray(rhs, dtype=float)).copy()
        if self.singular:
            f -= f.mean()
        fnorm = float(np.abs(f).max())
        if fnorm == 0.0:
            return PoissonResult(np.zeros(shape), 0.0, 0.0, 0, [0.0])
        target = tol * fnorm if atol is None else atol
        if method == "mgcg":
            x, hist, it, ok = self._pcg(f, target, max_iters, x0)
        elif method == "sor":
            x, hist, it, ok = self._sor(f, target, max_iters, x0, omega)
        else:
            raise ValueError(f"unknown Poisson method {method!r}")
        if self.singular:
            x -= x.mean()
        r = self._true_residual(x, f)
        rabs = float(np.abs(r).max())
        hist = [h / fnorm for h in hist]
        if not ok:
            raise NonConvergence(f"Poisson solve did not reach {target:.3e} in {max_iters} iterations "
                                 f"(residual {rabs:.3e})", hist)
        return PoissonResult(x.reshape(shape), rabs / fnorm, rabs, it, hist)

    def _true_residual(self, x, f):
        lev = self.levels[0]
        pp = lev.padded(x)
        lev.refresh(pp)
        return lev.residual(pp, f)

    def _pcg(self, f, target, max_iters, x0):
        x = np.zeros(self.shape) if x0 is None else _to3(np.asarray(x0, dtype=float)).copy()
        if self.singular:
            x -= x.mean()
        r = self._true_residual(x, f)
        hist = [float(np.abs(r).max())]
        if hist[-1] <= target:
            return x, hist, 0, True
        z = self.precondition(r)
        d = z.copy()
        rz = float(np.vdot(r, z))
        for it in range(1, max_iters + 1):
            ad = self.levels[0].apply(d)
            alpha = rz / float(np.vdot(d, ad))
            x += alpha * d
            r -= alpha * ad
            rn = float(np.abs(r).max())
            if rn <= target:
                # confirm against the true residual before stopping
                r = self._true_residual(x, f)
                rn = float(np.abs(r).max())
                hist.append(rn)
                if rn <= target:
                    return x, hist, it, True
            else:
                hist.append(rn)
            z = self.precondition(r)
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
        return x, hist, max_iters, False

    def _sor(self, f, target, max_iters, x0, omega):
        lev = self.levels[0]
        pp = lev.padded(None if x0 is None else _to3(np.asarray(x0, dtype=float)))
        lev.refresh(pp)
        hist = []
        for it in range(1, max_iters + 1):
            lev.smooth(pp, f, 1, (0, 1), omega)
            if self.singular:
                pp[1:-1, 1:-1, 1:-1] -= pp[1:-1, 1:-1, 1:-1].mean()
                lev.refresh(pp)
            rn = float(np.abs(lev.residual(pp, f)).max())
            hist.append(rn)
            if rn <= target:
                return pp[1:-1, 1:-1, 1:-1].copy(), hist, it, True
        return pp[1:-1, 1:-1, 1:-1].copy(), hist, max_iters, False


def solve_poisson(grid, beta, rhs, tol=1e-9, max_iters=200, *, x0=None, atol=None,
                  method="mgcg", problem=None) -> PoissonResult:
    """Solve ``div(beta grad p) = rhs`` over the whole grid.

    ``beta`` and ``rhs`` are global cell-centred arrays (or variable names on
    ``grid``); ``beta=None`` means unit coefficient. Returns a
    :class:`PoissonResult` whose ``p`` is the global pressure array.
    """
    if isinstance(rhs, str):
        rhs = grid.gather(rhs)
    if isinstance(beta, str):
        beta = grid.gather(beta)
    if problem is None:
        bcs = grid.poisson_bc()
        if beta is not None and np.any(np.asarray(beta) <= 0.0):
            raise ValueError("beta must be positive")
        faces = None if beta is None else harmonic_faces(np.asarray(beta, dtype=float), bcs)
        problem = PoissonProblem(rhs.shape, grid.dx, bcs, faces)
    return problem.solve(rhs, tol=tol, max_iters=max_iters, x0=x0, atol=atol, method=method)

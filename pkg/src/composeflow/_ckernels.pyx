# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the variable-coefficient Poisson solver.

Arrays follow the layout used by :mod:`composeflow.grid.poisson`:

* ``pp`` is the solution padded with one ghost layer, shape (nx+2, ny+2, nz+2)
* ``bx``, ``by``, ``bz`` are face coefficients, shapes (nx+1, ny, nz),
  (nx, ny+1, nz), (nx, ny, nz+1)
* ``f`` is the right-hand side, shape (nx, ny, nz)

The arithmetic order matches ``_pykernels`` term for term.
"""

cpdef void rb_sweep(double[:, :, ::1] pp, double[:, :, ::1] bx,
                    double[:, :, ::1] by, double[:, :, ::1] bz,
                    double[:, :, ::1] f, double h2, double omega, int color):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t i, j, k, k0
    cdef double s, d, gs, p
    for i in range(nx):
        for j in range(ny):
            k0 = (i + j + color) % 2
            for k in range(k0, nz, 2):
                d = bx[i, j, k] + bx[i + 1, j, k]
                d = d + by[i, j, k]
                d = d + by[i, j + 1, k]
                d = d + bz[i, j, k]
                d = d + bz[i, j, k + 1]
                if d <= 0.0:
                    continue
                s = bx[i, j, k] * pp[i, j + 1, k + 1] + bx[i + 1, j, k] * pp[i + 2, j + 1, k + 1]
                s = s + by[i, j, k] * pp[i + 1, j, k + 1]
                s = s + by[i, j + 1, k] * pp[i + 1, j + 2, k + 1]
                s = s + bz[i, j, k] * pp[i + 1, j + 1, k]
                s = s + bz[i, j, k + 1] * pp[i + 1, j + 1, k + 2]
                gs = (s - h2 * f[i, j, k]) / d
                p = pp[i + 1, j + 1, k + 1]
                pp[i + 1, j + 1, k + 1] = p + omega * (gs - p)


cpdef void residual(double[:, :, ::1] pp, double[:, :, ::1] bx,
                    double[:, :, ::1] by, double[:, :, ::1] bz,
                    double[:, :, ::1] f, double h2, double[:, :, ::1] out):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double a, p
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                p = pp[i + 1, j + 1, k + 1]
                a = bx[i, j, k] * (pp[i, j + 1, k + 1] - p) + bx[i + 1, j, k] * (pp[i + 2, j + 1, k + 1] - p)
                a = a + by[i, j, k] * (pp[i + 1, j, k + 1] - p)
                a = a + by[i, j + 1, k] * (pp[i + 1, j + 2, k + 1] - p)
                a = a + bz[i, j, k] * (pp[i + 1, j + 1, k] - p)
                a = a + bz[i, j, k + 1] * (pp[i + 1, j + 1, k + 2] - p)
                out[i, j, k] = f[i, j, k] - a / h2

"""Pure numpy versions of the compiled Poisson kernels.

Same signatures and the same floating-point operation order as
``_ckernels.pyx``, so both backends produce identical bits.
"""
import numpy as np

_parity_cache: dict = {}


def _parity(shape):
    mask = _parity_cache.get(shape)
    if mask is None:
        i, j, k = np.indices(shape)
        mask = (i + j + k) % 2
        _parity_cache[shape] = mask
    return mask


def rb_sweep(pp, bx, by, bz, f, h2, omega, color):
    nx, ny, nz = f.shape
    c = pp[1:-1, 1:-1, 1:-1]
    bxl, bxh = bx[:-1], bx[1:]
    byl, byh = by[:, :-1], by[:, 1:]
    bzl, bzh = bz[:, :, :-1], bz[:, :, 1:]
    d = bxl + bxh
    d = d + byl
    d = d + byh
    d = d + bzl
    d = d + bzh
    s = bxl * pp[:-2, 1:-1, 1:-1] + bxh * pp[2:, 1:-1, 1:-1]
    s = s + byl * pp[1:-1, :-2, 1:-1]
    s = s + byh * pp[1:-1, 2:, 1:-1]
    s = s + bzl * pp[1:-1, 1:-1, :-2]
    s = s + bzh * pp[1:-1, 1:-1, 2:]
    active = (_parity((nx, ny, nz)) == color) & (d > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gs = (s - h2 * f) / d
    upd = c + omega * (gs - c)
    c[active] = upd[active]


def residual(pp, bx, by, bz, f, h2, out):
    c = pp[1:-1, 1:-1, 1:-1]
    a = bx[:-1] * (pp[:-2, 1:-1, 1:-1] - c) + bx[1:] * (pp[2:, 1:-1, 1:-1] - c)
    a = a + by[:, :-1] * (pp[1:-1, :-2, 1:-1] - c)
    a = a + by[:, 1:] * (pp[1:-1, 2:, 1:-1] - c)
    a = a + bz[:, :, :-1] * (pp[1:-1, 1:-1, :-2] - c)
    a = a + bz[:, :, 1:] * (pp[1:-1, 1:-1, 2:] - c)
    out[...] = f - a / h2

"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``COMPOSEFLOW_KERNELS=python`` to force the fallback.
"""
import os

from composeflow import _pykernels

python_backend = _pykernels
compiled_backend = None

try:
    from composeflow import _ckernels as compiled_backend  # type: ignore[no-redef]
except ImportError:  # pragma: no cover - depends on the build
    compiled_backend = None

if compiled_backend is not None and os.environ.get("COMPOSEFLOW_KERNELS", "") != "python":
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = _pykernels
    BACKEND = "python"

rb_sweep = backend.rb_sweep
residual = backend.residual

__all__ = ["BACKEND", "rb_sweep", "residual", "python_backend", "compiled_backend"]

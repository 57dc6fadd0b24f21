"""Build the optional compiled kernel core.

The package works without it: ``composeflow.kernels`` falls back to the
numpy implementation when the extension is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("COMPOSEFLOW_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "composeflow._ckernels",
                    ["src/composeflow/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps results identical to the fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

"""Build script: compiles the Cython stepping core when Cython is available.

The package works without the extension (a pure-Python integrator is
selected at import time), so a failed compile only costs speed.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "heavyball_lab._core",
                ["src/heavyball_lab/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

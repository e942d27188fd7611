"""Build script: compiles the Cython kernel extension when possible.

Set SPREADHAWKES_PURE=1 to skip the extension entirely; the package then
runs on the pure-Python kernel fallback selected at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SPREADHAWKES_PURE") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "spreadhawkes._kernels._fast",
                    ["src/spreadhawkes/_kernels/_fast.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython/numpy at build time: install pure, kernels fall back.
        ext_modules = []

setup(ext_modules=ext_modules)

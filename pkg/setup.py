"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed or skipped compile only costs speed.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("TODOGEN_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext = Extension(
            "todogen.numeric._kernels_c",
            ["src/todogen/numeric/_kernels_c.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

"""Build the optional compiled event-loop kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python kernel at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("THETANET_NO_EXTENSION", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "thetanet._kernel",
                    ["src/thetanet/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

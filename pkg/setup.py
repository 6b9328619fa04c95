"""Build script: compiles the optional native similarity kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing compiler or Cython only costs speed, not
functionality.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "protoclf.kernels._native",
                ["src/protoclf/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Build script: compiles the optional Cython product-iteration kernels.

The package is fully functional without the extension (a pure-numpy
fallback is selected at import time); the build therefore tolerates a
missing compiler or Cython and installs the pure version.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("STOKESLAB_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "stokeslab._kernels",
                    ["src/stokeslab/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"stokeslab: building without compiled kernels ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)

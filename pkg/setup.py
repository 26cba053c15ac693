"""Build script: compiles the radial kernel when a toolchain is available.

A failed compile is not fatal; the package falls back to the pure-numpy
kernel at import time.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "jtoric._radial",
                sources=["src/jtoric/_radial.pyx",
                         "src/jtoric/_radial_core.c"],
                include_dirs=["src/jtoric", numpy.get_include()],
                define_macros=[
                    ("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-march=native", "-ffast-math",
                                    "-funroll-loops"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover
    print(f"warning: compiled kernel disabled ({exc}); "
          "using the numpy fallback", file=sys.stderr)

setup(ext_modules=ext_modules)

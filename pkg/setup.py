"""Build script: compiles the optional Cython kernel for the SDP solver.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/strainrelax/sdp/_schur.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for mod in ext_modules:
        mod.extra_compile_args = ["-O3"]
except Exception as exc:  # noqa: BLE001 - any build problem falls back to pure python
    print(f"strainrelax: building without compiled kernel ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)

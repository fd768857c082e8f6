"""Build script: compiles the optional C++ kernel extension.

The package works without the extension (a pure-Python fallback is selected
at import time); set CHAIN_AUDIT_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CHAIN_AUDIT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "chainaudit._kernels._speedups",
                    ["src/chainaudit/_kernels/_speedups.pyx"],
                    language="c++",
                    extra_compile_args=["-O3", "-std=c++17"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

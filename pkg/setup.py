"""Build script for the optional compiled kernel extension.

The package works without the extension (qtmlab._core falls back to a
vectorized numpy implementation), so a failed compile is not fatal for
development installs; it just means the fallback backend is selected.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "qtmlab._core._speedups",
                ["src/qtmlab/_core/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

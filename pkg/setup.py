"""Build script for the optional compiled kernel core.

If Cython or a C compiler is unavailable the package still installs; the
pure-numpy fallback in megdecode.backend is used instead.
"""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        ["src/megdecode/backend/_kernels_cy.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.extra_compile_args = ["-O3"]
        ext.define_macros = [("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")]
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

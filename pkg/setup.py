"""Build hook for the optional compiled kernels.

The Cython extension is built when Cython and a C compiler are available;
otherwise the package installs without it and ``pwlv.kernels`` falls back
to the pure-Python implementations.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PWLV_NO_EXTENSION", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("pwlv._kernels", ["src/pwlv/_kernels.pyx"], include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

"""Build script for the optional compiled far-field kernel.

The package is pure Python with one Cython extension for the multipole
evaluation inner loop.  The extension is marked optional: if it fails to
build, the install still succeeds and the package falls back to the
numpy implementation in poissonext._kernels_py.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "poissonext._kernels",
        sources=["src/poissonext/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception:
    ext_modules = []

setup(ext_modules=ext_modules)

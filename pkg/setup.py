"""Build script: compiles the optional Cython kernel extension.

The extension is marked optional -- if Cython or a C compiler is missing the
install still succeeds and fibnet falls back to the pure-NumPy kernels.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "fibnet._kernels._cy_backend",
        sources=["src/fibnet/_kernels/_cy_backend.pyx"],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)

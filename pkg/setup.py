"""Build the optional compiled kernels.

The package works without them: ``combbell.kernels`` falls back to the
pure-Python implementation when the extension cannot be imported.
"""
from setuptools import Extension, setup


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "combbell._kernels",
        ["src/combbell/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())

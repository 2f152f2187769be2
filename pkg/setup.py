"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: ``scalepose._kernels``
falls back to the pure-NumPy backend when ``scalepose._kernels._native`` is
missing. Set SCALEPOSE_NO_NATIVE=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the native kernels if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken toolchain
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            "scalepose: native kernel build failed (%s); "
            "falling back to the pure-NumPy backend" % (exc,)
        )


def _extensions():
    if os.environ.get("SCALEPOSE_NO_NATIVE"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "scalepose._kernels._native",
        ["src/scalepose/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})

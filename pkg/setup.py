import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the compiled kernels if possible; the numpy fallback covers failures."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "elaspoof._ckernels",
        ["src/elaspoof/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

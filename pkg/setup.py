"""Build hook for the optional Cython kernels.

The extension is optional: when no compiler is available the package still
installs and falls back to the pure-Python kernels at import time.
"""
import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            print(f"warning: compiled kernels not built ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: failed to build {ext.name} ({exc})")


ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "diffnav._kernels._ckernels",
                ["src/diffnav/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction and no sin/cos -> sincos fusion: results must match the Python fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-builtin"],
                language="c++",
            )
        ],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False, "cdivision": True},
    )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})

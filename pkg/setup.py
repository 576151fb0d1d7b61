"""Build script.  The compiled kernel is optional: when Cython or a C
compiler is unavailable the package installs anyway and falls back to the
numpy implementation in wplab._kernels.fallback."""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            print(f"warning: extension build skipped ({exc}); "
                  "the numpy fallback will be used", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "the numpy fallback will be used", file=sys.stderr)


def maybe_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "wplab._kernels._core",
        ["src/wplab/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=maybe_extensions(), cmdclass={"build_ext": OptionalBuildExt})

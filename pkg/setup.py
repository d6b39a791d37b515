"""Build script: compiles the optional speedup extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failing C build must not fail the install.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            sys.stderr.write(
                "warning: building the compiled kernel failed (%s); "
                "falling back to the pure-python kernels\n" % exc
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            sys.stderr.write(
                "warning: extension %s skipped (%s)\n" % (ext.name, exc)
            )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "fscsynth._kernels._core",
        ["src/fscsynth/_kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

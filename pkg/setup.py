import os

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError
from setuptools.extension import Extension


class OptionalBuildExt(build_ext):
    """Build the compiled kernels if possible; fall back to pure numpy."""

    def run(self):
        try:
            super().run()
        except (CCompilerError, ExecError, PlatformError) as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError, ValueError) as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"WARNING: compiled kernels unavailable ({exc}); "
              "wclot will use the pure-numpy backend")


def extensions():
    if os.environ.get("WCLOT_NO_EXT") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("WARNING: Cython not found; building without compiled kernels")
        return []
    ext = Extension(
        "wclot._kernels._ext",
        sources=["src/wclot/_kernels/_ext.pyx", "src/wclot/_kernels/_impl.c"],
        include_dirs=["src/wclot/_kernels"],
        extra_compile_args=["-O3", "-ffast-math", "-march=native"],
        # -ffast-math vectorises exp/log through glibc's libmvec
        extra_link_args=["-lmvec", "-lm"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

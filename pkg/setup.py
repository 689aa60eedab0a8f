"""Build script; compiles the optional Cython sweep kernel.

The compiled extension is a pure accelerator: linksyn._kernels falls back to
the numpy reference implementation when the extension is missing, so a failed
compile must not fail the install.
"""
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "linksyn._kernels._sweep_cy",
        ["src/linksyn/_kernels/_sweep_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


class optional_build_ext(build_ext):
    """Swallow compile failures: the package works without the extension."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"skipping Cython kernel build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping {ext.name}: {exc}")


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)

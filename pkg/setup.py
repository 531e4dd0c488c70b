import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the compiled kernel if possible; the package falls back to the
    pure-Python kernels at import time when the extension is missing."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler/toolchain missing
            print(f"warning: compiled kernel skipped ({exc}); pure-Python kernels will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); pure-Python kernels will be used")


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "glheat._kernels._core",
                ["src/glheat/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})

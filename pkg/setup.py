"""Builds the optional compiled kernels; the package falls back to numpy without them."""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "bornvi._kernels",
                ["src/bornvi/_kernels.pyx"],
                # limited-range complex arithmetic skips the inf/nan recovery path of C99 multiply
                extra_compile_args=["-O3", "-fcx-limited-range"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)

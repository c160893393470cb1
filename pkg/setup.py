import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffast-math is deliberately not used: the compiled kernels must produce
# bit-identical IEEE results to the pure-Python fallback.
extensions = [
    Extension(
        "jsqguard._kernels",
        ["src/jsqguard/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)

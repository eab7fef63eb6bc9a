import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "bevda.kernels._native",
                ["src/bevda/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

# Without Cython the package still installs; bevda.kernels falls back to the
# pure-numpy implementation at import time.
setup(ext_modules=extensions)

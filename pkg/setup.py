"""Build script: compiles the optional Cython convolution kernels.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile only costs speed, never functionality.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "emoloop.kernels._conv_cy",
                ["src/emoloop/kernels/_conv_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

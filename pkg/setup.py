"""Build the optional Cython jet kernels; the package falls back to numpy without them."""
import os

import numpy as np
from setuptools import Extension, setup

extensions = []
if not os.environ.get("RSEP_NO_EXTENSION"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "rsep._jetcore",
                    ["src/rsep/_jetcore.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=extensions)

"""Build the optional compiled kernels.

The extension is optional: if Cython or a compiler is missing the package
still installs and falls back to the numpy kernels at import.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build environment without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "kinorrt._kernels",
                sources=["src/kinorrt/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

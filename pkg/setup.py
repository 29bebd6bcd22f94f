import os

import numpy
from setuptools import Extension, setup

# The compiled kernels are optional: LEJACAL_PURE_PYTHON=1 skips them and the
# package falls back to the numpy implementations in lejacal._slowkern.
ext_modules = []
if not os.environ.get("LEJACAL_PURE_PYTHON"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "lejacal._fastkern",
            ["src/lejacal/_fastkern.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(extensions, language_level=3)

setup(ext_modules=ext_modules)

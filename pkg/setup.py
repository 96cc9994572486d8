import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback covers installs without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "eqtensor._kernels._sigkern",
                ["src/eqtensor/_kernels/_sigkern.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

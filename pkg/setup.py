from setuptools import Extension, setup

from Cython.Build import cythonize
import numpy as np

ext = Extension(
    "rdsteer._kernels.cython_backend",
    ["src/rdsteer/_kernels/cython_backend.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))

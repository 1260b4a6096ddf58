import numpy as np
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled kernels bit-compatible with the
# pure-numpy fallback on targets where GCC would otherwise fuse a*b+c.
ext = Extension(
    "psgld.kernels._chains",
    ["src/psgld/kernels/_chains.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O2", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

try:
    from Cython.Build import cythonize

    extensions = cythonize([ext], language_level=3)
except ImportError:
    # No Cython at build time: the package still works through the
    # pure-python kernel fallback selected at import.
    extensions = []

setup(ext_modules=extensions)

from setuptools import Extension, setup

# The compiled kernel is optional: the package falls back to a pure-numpy
# implementation at import time if the extension is missing.
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "crowdmetric._kernels",
                ["src/crowdmetric/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

import os

import numpy as np
from setuptools import Extension, setup

# Build the compiled kernels unless SLGT_NO_EXT is set; the package falls
# back to numpy implementations when the extension is missing.
ext_modules = []
if not os.environ.get("SLGT_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "slgtformer.tensor._ckernels",
                ["src/slgtformer/tensor/_ckernels.pyx"],
                include_dirs=[np.get_include(), "src/slgtformer/tensor"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                libraries=["m", "mvec"],
                extra_compile_args=["-O3", "-march=native", "-ffast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

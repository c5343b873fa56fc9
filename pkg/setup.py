import os

from setuptools import Extension, setup

# The compiled kernel is optional: if Cython (or a C compiler) is missing the
# package still installs and falls back to the scipy-based backend at import.
ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    # -ffp-contract=off keeps the accumulation bit-compatible with the
    # fallback backend (no FMA contraction).
    ext = Extension(
        "megcf.kernels._core",
        ["src/megcf/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )
except ImportError:
    if os.environ.get("MEGCF_REQUIRE_EXTENSION"):
        raise

setup(ext_modules=ext_modules)

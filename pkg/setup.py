"""Build script: compiles the optional simplex kernel extension.

The extension is marked optional so the package installs cleanly on hosts
without a C toolchain; the solver then falls back to the numpy kernel.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "evsched.lp._kernel",
                ["src/evsched/lp/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

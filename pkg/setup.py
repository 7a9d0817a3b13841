"""Build the optional compiled allocation kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python kernel at import time.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("TOPM_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "topm.policies._kernel",
                    ["src/topm/policies/_kernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    # no fast-math and no FMA contraction: the compiled kernel
                    # must agree bit for bit with the Python fallback
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)

import os

from setuptools import setup

ext_modules = []
if os.environ.get("JACOBIVAR_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                "jacobivar._kernels",
                ["src/jacobivar/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

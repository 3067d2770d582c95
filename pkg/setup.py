from setuptools import setup

ext_modules = []
try:
    import numpy  # noqa: F401
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "multidefault._kernels",
                ["src/multidefault/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
        quiet=True,
    )
except ImportError:
    # no Cython: the numpy fallback is used
    pass

setup(ext_modules=ext_modules)

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("COAGEMIT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python fallback is selected at import time
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("coagemit._kernel", ["src/coagemit/_kernel.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

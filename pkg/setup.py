import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    print("Cython/numpy not available; installing pure-Python kernels only")
else:
    extensions = [
        Extension(
            "trfc._kernels",
            [os.path.join("src", "trfc", "_kernels.pyx")],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)

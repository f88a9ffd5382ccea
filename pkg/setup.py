import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The package still works on the pure-Python kernel lane.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "orliczsmooth._kernels_cy",
                ["src/orliczsmooth/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

"""Build script for the optional fused kernels.

The package is fully functional without the compiled extension: the
kernels subpackage falls back to pure numpy implementations at import
time.  Building is therefore best-effort; any compiler or Cython failure
leaves a working pure-Python install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "clinicast.kernels._fused",
                sources=["src/clinicast/kernels/_fused.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"fused kernels disabled ({exc}); installing pure-python fallback")

setup(ext_modules=ext_modules)

"""Builds the optional compiled distance-transform kernel.

The package works without it: sppnet._kernels falls back to the vectorized
numpy implementation when the extension is missing. Build in place with
`python setup.py build_ext --inplace` or just `pip install -e .`.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "sppnet._l1dist",
                ["src/sppnet/_l1dist.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

for ext in ext_modules:
    ext.optional = True

setup(ext_modules=ext_modules)

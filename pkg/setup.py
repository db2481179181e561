"""Build script for the optional compiled simulation kernel.

The package is fully functional without Cython; `artery.sim.kernels`
falls back to the pure-Python step kernel when the extension is absent.
Contraction is disabled so compiled and interpreted floating-point
results agree bit for bit.
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
                "artery.sim._stepcore",
                ["src/artery/sim/_stepcore.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

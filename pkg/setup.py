"""Build script for the compiled kernel core.

The extension is optional at runtime: xsep.backend falls back to the
pure-numpy kernels when the compiled module is absent, so a failed
compilation degrades performance but not functionality.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# No -ffast-math and no FMA contraction: the kernels must stay strictly
# IEEE (plain mul + add) so both backends produce bit-identical
# convolutions and reductions.  AVX2 only widens the elementwise lanes,
# which does not change results; enabled when the build host has it.
CFLAGS = ["-O3"]


def _host_has_avx2():
    try:
        with open("/proc/cpuinfo", "r", encoding="ascii", errors="ignore") as fh:
            return " avx2 " in fh.read().replace("\n", " ")
    except OSError:
        return False


if _host_has_avx2():
    CFLAGS += ["-mavx2", "-mno-fma"]

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "xsep._kernels",
                ["src/xsep/_kernels.pyx"],
                extra_compile_args=CFLAGS,
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)

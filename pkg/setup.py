"""Builds the optional compiled kernels; the package works without them."""
from setuptools import setup
from setuptools.command.build_ext import build_ext


# fast-math lets gcc call the SIMD exp from libmvec; keep NaN/inf semantics intact
FAST_FLAGS = ["-O3", "-ffast-math", "-fno-finite-math-only"]


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler, no Cython headers, ...
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:
            print(f"warning: vectorized build of {ext.name} failed ({exc}); retrying without libmvec")
        # libmvec (glibc) supplies the SIMD exp; other toolchains get a plain build
        ext.extra_compile_args = ["-O3"]
        ext.libraries = [lib for lib in ext.libraries if lib != "mvec"]
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    return cythonize(
        [Extension("geoflow._ckernels", ["src/geoflow/_ckernels.pyx"],
                   extra_compile_args=FAST_FLAGS, libraries=["mvec", "m"])],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

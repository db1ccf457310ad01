"""Backend selection for the hot kernels.

WARPREG_BACKEND=numpy forces the pure-numpy kernels; WARPREG_BACKEND=numba
requires numba and fails loudly if it is missing. Unset (or "auto") picks
numba when importable and falls back to numpy otherwise. The dense-network
passes are not switched here: they are matmul and tanh bound, which BLAS
and numpy's vectorized ufuncs already win (see benchmarks/bench_kernels.py).
"""

import os

from . import numpy_impl

_requested = os.environ.get("WARPREG_BACKEND", "auto").lower()

if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(f"WARPREG_BACKEND must be auto, numba or numpy, got {_requested!r}")

if _requested == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_impl
        BACKEND = "numpy"

interp2_sample = _impl.interp2_sample
backward_gate = _impl.backward_gate
interp3_sample = _impl.interp3_sample
ray_cast_inside = _impl.ray_cast_inside

"""Kernel backend selection: compiled extension with pure-Python fallback.

The compiled module is preferred; set ``EPIA_PURE_PYTHON=1`` to force the
numpy implementation (used by the benchmark and as a safety net on platforms
where the extension did not build).
"""

import os

from . import py_backend

if os.environ.get("EPIA_PURE_PYTHON"):
    impl = py_backend
else:
    try:
        from . import _speedups as impl
    except ImportError:  # extension not built
        impl = py_backend

BACKEND = impl.BACKEND
policy_from_exponent = impl.policy_from_exponent
averaged_scalar = impl.averaged_scalar
averaged_vector = impl.averaged_vector
averaged_matrix = impl.averaged_matrix
mc_block_1d = impl.mc_block_1d
mc_block_2d = impl.mc_block_2d

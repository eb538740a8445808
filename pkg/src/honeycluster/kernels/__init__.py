"""Hot numeric kernels with a numba path and a pure-numpy path.

The active implementation is chosen once at import time (see
``honeycluster._accel``). Both are importable directly as
``kernels.numba_impl`` / ``kernels.numpy_impl`` for cross-checking and
benchmarking.
"""

from .. import _accel
from . import _numpy as numpy_impl

if _accel.NUMBA_AVAILABLE:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_active = numba_impl if _accel.USE_NUMBA else numpy_impl

dtw_pair = _active.dtw_pair
dtw_pairwise = _active.dtw_pairwise
optics_graph = _active.optics_graph
padded_hamming = _active.padded_hamming
cnm_labels = _active.cnm_labels

BACKEND = _accel.backend_name()

__all__ = [
    "BACKEND",
    "cnm_labels",
    "dtw_pair",
    "dtw_pairwise",
    "numba_impl",
    "numpy_impl",
    "optics_graph",
    "padded_hamming",
]

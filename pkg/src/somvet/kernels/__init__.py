"""Hot numeric kernels with two interchangeable backends.

The numba backend is used when available; set ``SOMVET_NUMBA=0`` to force
the pure-numpy fallback. Both backends implement the same contracts
(shapes, tie-breaking, determinism); see ``benchmarks/bench_kernels.py``
for a speed comparison.
"""

import os

_flag = os.environ.get("SOMVET_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

if _want_numba:
    try:
        from . import numba_impl as _impl
        USE_NUMBA = True
    except ImportError:
        from . import numpy_impl as _impl
        USE_NUMBA = False
else:
    from . import numpy_impl as _impl
    USE_NUMBA = False


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


conv2d_valid = _impl.conv2d_valid
conv2d_valid_grad_x = _impl.conv2d_valid_grad_x
conv2d_valid_grad_w = _impl.conv2d_valid_grad_w
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward
bmu_batch = _impl.bmu_batch
label_components = _impl.label_components

"""Backend selection for the scaling-iteration hot loops.

The compiled extension is preferred; the numpy implementation is the
fallback. Set ``WCLOT_PURE_PYTHON=1`` to force the fallback (useful for
benchmarking and for debugging kernel-level differences).
"""

import os

if os.environ.get("WCLOT_PURE_PYTHON") == "1":
    from wclot._kernels import _numpy as _backend
else:
    try:
        from wclot._kernels import _ext as _backend  # type: ignore[no-redef]
    except ImportError:
        from wclot._kernels import _numpy as _backend  # type: ignore[no-redef]

BACKEND = _backend.BACKEND
log_forward = _backend.log_forward
log_backward = _backend.log_backward


def get_backend(name=None):
    """Return a backend module by name ("ext" or "numpy"); default current."""
    if name is None or name == BACKEND:
        return _backend
    if name == "numpy":
        from wclot._kernels import _numpy
        return _numpy
    if name == "ext":
        from wclot._kernels import _ext
        return _ext
    raise ValueError(f"unknown kernel backend: {name!r}")

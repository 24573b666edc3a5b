"""Backend selection for the inner loops.

The compiled extension is used when it was built; otherwise, or when
``PROBESCHED_PURE_PYTHON`` is set, the numpy fallback is used. Both produce
bit-identical results.
"""
import os

from . import _pykernels

if os.environ.get("PROBESCHED_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

element_positions = _impl.element_positions
deterministic_profile = _impl.deterministic_profile
accumulate_row = _impl.accumulate_row
probabilistic_row = _impl.probabilistic_row
kt_best = _impl.kt_best


def backends():
    """Available kernel modules keyed by name (for tests and benchmarks)."""
    found = {"python": _pykernels}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found

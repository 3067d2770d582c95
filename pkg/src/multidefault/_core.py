"""Kernel backend selection.

The compiled extension is used when it was built; set ``MULTIDEFAULT_PURE=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("MULTIDEFAULT_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def backward_step(child_values, parent, prob, n_parent, impl=None):
    """Sum ``prob[j] * child_values[j]`` into row ``parent[j]`` of the parent level."""
    impl = impl or _impl
    return impl.backward_step(
        np.ascontiguousarray(child_values, dtype=np.float64),
        np.ascontiguousarray(parent, dtype=np.intp),
        np.ascontiguousarray(prob, dtype=np.float64),
        int(n_parent),
    )


def group_sum(values, labels, n_groups, impl=None):
    """Column sums of ``values`` grouped by ``labels``: out[r, g] = sum over labels[k] == g."""
    impl = impl or _impl
    return impl.group_sum(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.intp),
        int(n_groups),
    )

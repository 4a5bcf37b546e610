"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``MALLOWSMIX_BACKEND=python`` forces the
fallback (the benchmark and the cross-backend tests rely on this).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MALLOWSMIX_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

insertion_sample = _impl.insertion_sample
prepend_insert = _impl.prepend_insert
top_counts = _impl.top_counts
position_counts = _impl.position_counts
distances_to = _impl.distances_to
precedence = _impl.precedence
lehmer_keys = _impl.lehmer_keys


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover
        return out
    out["cython"] = _compiled
    return out

"""Hot kernels: compiled Cython core when built, NumPy fallback otherwise.

Set ``GBSGCP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import pykernels

BACKEND = "python"
_impl = pykernels

if os.environ.get("GBSGCP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = pykernels

grouped_weights = _impl.grouped_weights
gcp_sums = _impl.gcp_sums
poisson_counts = _impl.poisson_counts


def backends():
    """Available kernel modules keyed by name (for benchmarks and tests)."""
    found = {"python": pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found

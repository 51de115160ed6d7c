"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``PBVLAB_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
active implementation.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if os.environ.get("PBVLAB_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; "
                         f"have {sorted(BACKENDS)}") from None

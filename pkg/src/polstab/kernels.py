"""Backend selection for the hot loops.

The compiled extension ``_kernels`` is used when it imports; otherwise, or
when the environment variable ``POLSTAB_PURE_PYTHON`` is set to a
non-empty value other than ``0``, the pure-Python twin is used.
``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("POLSTAB_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

fiber_walk = _impl.fiber_walk
control_loop = _impl.control_loop


def backends():
    """Mapping of every importable backend name to its module."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["cython"] = _kernels
    except ImportError:
        pass
    return out

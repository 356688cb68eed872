"""Selects the simulation kernel at import time.

The compiled extension is preferred; ``COAGEMIT_BACKEND=python`` forces the
pure-Python fallback.  Both expose ``advance``, ``draw_pair`` and
``feasible`` with identical semantics.
"""
import os

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

_KERNELS = {"python": _kernel_py}
if _compiled is not None:
    _KERNELS["cython"] = _compiled


def available() -> list[str]:
    return sorted(_KERNELS)


def get(name: str | None = None):
    """Kernel module by name; ``None`` gives the default."""
    if name is None:
        return kernel
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {available()})") from None


_requested = os.environ.get("COAGEMIT_BACKEND", "").strip().lower()
if _requested in ("python", "py", "pure"):
    name = "python"
elif _compiled is not None:
    name = "cython"
else:
    name = "python"
kernel = _KERNELS[name]

"""Backend selection for the numerical kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
NumPy implementation in ``_pykernels``. Set ``HOUSEHOLD_MERTON_BACKEND=python``
to force the fallback.
"""
import os
from types import ModuleType

from . import _pykernels

_FORCE_PYTHON = os.environ.get("HOUSEHOLD_MERTON_BACKEND", "").lower() == "python"

try:
    if _FORCE_PYTHON:
        raise ImportError("python backend requested")
    from . import _ckernels as _active
    BACKEND = "cython"
except ImportError:
    _active = _pykernels
    BACKEND = "python"

integrate_affine = _active.integrate_affine
simulate_paths = _active.simulate_paths
weighted_exp_moments = _active.weighted_exp_moments


def get_backend(name: str) -> ModuleType:
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names

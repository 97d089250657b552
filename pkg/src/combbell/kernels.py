"""Backend selection for the orthant kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over.  Both expose ``orthant_batch`` and
``correlator_batch`` with identical signatures.
"""
from __future__ import annotations

from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["available_backends", "backend_name", "set_backend", "orthant_batch", "correlator_batch"]

_active: ModuleType = _compiled if _compiled is not None else _kernels_py


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def backend_name() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def set_backend(name: str) -> str:
    """Switch backend (``"compiled"``, ``"python"`` or ``"auto"``); returns the previous name."""
    global _active
    previous = backend_name()
    if name == "python":
        _active = _kernels_py
    elif name in ("compiled", "auto"):
        if _compiled is None:
            if name == "compiled":
                raise ImportError("compiled orthant kernels are not built; reinstall with Cython available")
            _active = _kernels_py
        else:
            _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return _active
    return {"python": _kernels_py, "compiled": _compiled}[name]


def orthant_batch(corr, abstol: float = 1e-7):
    return _active.orthant_batch(corr, abstol)


def correlator_batch(cov, abstol: float = 1e-7):
    return _active.correlator_batch(cov, abstol)

"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels``.  Set ``TAILRISK_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("TAILRISK_PURE_PYTHON", "").strip() not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


backend, BACKEND = _load()


def get(name: str) -> ModuleType:
    """Return a specific backend module (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


project = backend.project
objective_subgrad = backend.objective_subgrad
psg_minimize = backend.psg_minimize
sa_steps = backend.sa_steps
selfstruct_map = backend.selfstruct_map

"""Kernel lane selection.

The compiled lane (``_kernels_cy``, Cython) is preferred when importable; the
numpy lane is the fallback. Set ORLICZSMOOTH_BACKEND=python or =cython to force
one — forcing cython raises if the extension is missing, so CI can assert it
actually built.
"""
from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("ORLICZSMOOTH_BACKEND", "").strip().lower()

if _choice in ("python", "py", "numpy"):
    kernels = _kernels_py
    BACKEND_NAME = "python"
elif _choice in ("cython", "cy", "c"):
    from . import _kernels_cy as kernels  # noqa: F401

    BACKEND_NAME = "cython"
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[no-redef]

        BACKEND_NAME = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND_NAME = "python"


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` (default: the selected lane)."""
    if name is None:
        return kernels
    name = name.strip().lower()
    if name in ("python", "py", "numpy"):
        return _kernels_py
    if name in ("cython", "cy", "c"):
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown backend {name!r}")

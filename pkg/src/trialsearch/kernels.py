"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Set ``TRIALSEARCH_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from trialsearch import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TRIALSEARCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from trialsearch import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

rho_exact_table = _impl.rho_exact_table
rho_bound_table = _impl.rho_bound_table
backward_induction = _impl.backward_induction
smooth_table = _impl.smooth_table


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` (for benchmarks and tests)."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from trialsearch import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")

"""Kernel backend selection.

Prefers the compiled Cython sweep when it is importable; falls back to the
numpy reference otherwise. Both produce bitwise-identical results (covered
by tests), so the choice only affects speed. Force a backend with
LINKSYN_KERNEL=python or LINKSYN_KERNEL=cython.
"""
from __future__ import annotations

import os

from . import reference

_forced = os.environ.get("LINKSYN_KERNEL", "").strip().lower()

if _forced not in ("", "python", "cython"):
    raise ImportError(f"LINKSYN_KERNEL must be 'python' or 'cython', got {_forced!r}")

if _forced == "python":
    _impl = reference
else:
    try:
        from . import _sweep_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        if _forced == "cython":
            raise
        _impl = reference

BACKEND = _impl.BACKEND_NAME
STATUS_OK = reference.STATUS_OK
STATUS_BRANCH_DEFECT = reference.STATUS_BRANCH_DEFECT
STATUS_DEGENERATE = reference.STATUS_DEGENERATE
DEGENERATE_TOL = reference.DEGENERATE_TOL
COS_SLACK = reference.COS_SLACK

sweep = _impl.sweep
reference_sweep = reference.sweep

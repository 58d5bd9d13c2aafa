"""Kernel selection: compiled extension when available, numpy fallback otherwise.

Set QTM_PURE_PYTHON=1 to force the fallback (used by the benchmark and the
kernel equivalence tests).
"""

from __future__ import annotations

import os

from . import fallback as _fallback

if os.environ.get("QTM_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _fallback

KERNEL_BACKEND: str = _impl.BACKEND

assemble_evolution_coo = _impl.assemble_evolution_coo
classify_output_configs = _impl.classify_output_configs

__all__ = [
    "KERNEL_BACKEND",
    "assemble_evolution_coo",
    "classify_output_configs",
]

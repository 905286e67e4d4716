"""Backend selection for the hot geometry kernel.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Set ``COEXSIM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _crossings_py

if os.environ.get("COEXSIM_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _crossings as _compiled
    except ImportError:  # extension not built
        _compiled = None

if _compiled is not None:
    segment_crossings = _compiled.segment_crossings
    BACKEND = "cython"
else:
    segment_crossings = _crossings_py.segment_crossings
    BACKEND = "numpy"

segment_crossings_py = _crossings_py.segment_crossings
segment_crossings_compiled = None if _compiled is None else _compiled.segment_crossings

__all__ = ["segment_crossings", "segment_crossings_py", "segment_crossings_compiled", "BACKEND"]

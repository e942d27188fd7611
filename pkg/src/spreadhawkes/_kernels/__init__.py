"""Kernel backend selection.

The numeric hot loops exist twice: a compiled Cython extension
(``_fast``) and a pure-Python reference (``_ref``) with identical
semantics and random-number consumption.  By default the compiled
backend is used when the extension built, otherwise the reference.
Set ``SPREADHAWKES_KERNELS=py`` to force the reference or
``SPREADHAWKES_KERNELS=c`` to require the compiled one.
"""

from __future__ import annotations

import os

from . import _ref

_choice = os.environ.get("SPREADHAWKES_KERNELS", "").strip().lower()

if _choice in ("py", "python", "ref", "pure"):
    impl = _ref
    BACKEND = "python"
elif _choice in ("c", "fast", "compiled", "cython"):
    from . import _fast

    impl = _fast
    BACKEND = "compiled"
elif _choice == "":
    try:
        from . import _fast
    except ImportError:
        impl = _ref
        BACKEND = "python"
    else:
        impl = _fast
        BACKEND = "compiled"
else:
    raise RuntimeError(
        f"SPREADHAWKES_KERNELS={_choice!r} not understood; use 'py' or 'c'"
    )

__all__ = ["impl", "BACKEND", "_ref"]

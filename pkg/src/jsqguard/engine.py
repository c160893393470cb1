"""Kernel engine selection.

The compiled extension is preferred when importable; the pure-Python
fallback is otherwise used transparently.  Set ``JSQGUARD_ENGINE=python``
to force the fallback (used by the engine-parity tests and benchmarks).
Both engines are bit-compatible, so results do not depend on the choice.
"""

import os

from . import _pykernels

_FORCED = os.environ.get("JSQGUARD_ENGINE", "auto").lower()

if _FORCED == "python":
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _FORCED == "compiled":
            raise
        kernels = _pykernels


def active_engine() -> str:
    """Name of the kernel engine in use: 'compiled' or 'python'."""
    return "compiled" if kernels.COMPILED else "python"

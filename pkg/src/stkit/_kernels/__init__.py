"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built and ``STKIT_PURE_PYTHON``
is not set to a truthy value. ``BACKEND`` names the active implementation.
"""
import os

from . import _pure

_force_pure = os.environ.get("STKIT_PURE_PYTHON", "").lower() in ("1", "true", "yes")

try:
    if _force_pure:
        raise ImportError("pure-python backend forced")
    from . import _ext as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _pure
    BACKEND = "python"

edit_distance = _impl.edit_distance
bpe_merge = _impl.bpe_merge
replace_pair = _impl.replace_pair


def implementations():
    """Return ``{name: module}`` for every available backend."""
    impls = {"python": _pure}
    try:
        from . import _ext
        impls["compiled"] = _ext
    except ImportError:
        pass
    return impls

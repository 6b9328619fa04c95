"""Kernel backend selection.

The compiled extension is preferred when present; ``PROTOCLF_KERNEL`` forces
a choice (``native`` | ``pure``). Both backends expose ``pairwise_cosine``
and ``pairwise_neg_l2`` over C-contiguous float64 matrices.
"""

import os

from . import pure as _pure

_requested = os.environ.get("PROTOCLF_KERNEL", "auto").lower()

if _requested == "pure":
    _impl = _pure
elif _requested in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "native":
            raise ImportError(
                "PROTOCLF_KERNEL=native but the compiled extension is not built; "
                "reinstall the package with a C compiler available"
            )
        _impl = _pure
else:
    raise ValueError(f"PROTOCLF_KERNEL must be auto|native|pure, got {_requested!r}")

BACKEND: str = _impl.BACKEND
pairwise_cosine = _impl.pairwise_cosine
pairwise_neg_l2 = _impl.pairwise_neg_l2


def get_backend(name: str = "active"):
    """Return a kernel module by name: ``active``, ``pure`` or ``native``."""
    if name == "active":
        return _impl
    if name == "pure":
        return _pure
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")

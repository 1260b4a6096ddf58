"""Kernel backend selection.

The chain drivers call block-advancing kernels through this module.  At
import time the compiled extension is preferred; the numpy fallback is
used when the extension is missing or when ``PSGLD_KERNELS=python`` is
set.  ``PSGLD_KERNELS=compiled`` makes a missing extension a hard error.
Both backends expose the same functions; ``get_backend`` returns a
specific one for parity tests and benchmarks.
"""

import os

from . import py_chains

_requested = os.environ.get("PSGLD_KERNELS", "").strip().lower()

if _requested == "python":
    _impl = py_chains
    BACKEND = "python"
else:
    try:
        from . import _chains as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = py_chains
        BACKEND = "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` (None means the selected one)."""
    if name in (None, "auto"):
        return _impl
    if name == "python":
        return py_chains
    if name == "compiled":
        from . import _chains

        return _chains
    raise ValueError(f"unknown kernel backend {name!r}")


gaussian_chain_block = _impl.gaussian_chain_block
blr_chain_block = _impl.blr_chain_block
mh_gaussian_block = _impl.mh_gaussian_block
mh_blr_block = _impl.mh_blr_block

"""Pick the transfer kernel backend at import time.

The compiled ``_transfer`` extension is used when it is importable, unless
``CORRPOLY_PURE=1`` is set in the environment.
"""
import os

from . import _transfer_py

if os.environ.get("CORRPOLY_PURE") == "1":
    _impl = _transfer_py
else:
    try:
        from . import _transfer as _impl
    except ImportError:
        _impl = _transfer_py

BACKEND = _impl.BACKEND
apply_bands = _impl.apply_bands
forward = _impl.forward
backward_sample = _impl.backward_sample

__all__ = ["BACKEND", "apply_bands", "forward", "backward_sample"]

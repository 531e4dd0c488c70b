"""Kernel backend selection: compiled extension when built, numpy fallback
otherwise.  Both expose the same `advance` contract; see fallback.py."""

from . import fallback

try:
    from . import _core

    impl = _core
    BACKEND = "compiled"
except ImportError:  # extension not built on this install
    impl = fallback
    BACKEND = "python"

advance = impl.advance

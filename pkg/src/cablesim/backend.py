"""Backend selection for the hot kernels.

The env flag CABLESIM_BACKEND picks "numba" (default when importable) or
"numpy". The numpy path is a vectorized re-implementation of the same step
semantics; the two agree to ~1e-12 V over thousands of steps (libm ulp
differences prevent bitwise equality across backends).
"""

from __future__ import annotations

import os

ENV_FLAG = "CABLESIM_BACKEND"

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


def default_backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"


def resolve_backend(name: str = None) -> str:
    """Resolve an explicit name or the env flag to a usable backend."""
    choice = name or os.environ.get(ENV_FLAG) or default_backend()
    choice = choice.lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    if choice == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not "
                           "importable; set CABLESIM_BACKEND=numpy")
    return choice

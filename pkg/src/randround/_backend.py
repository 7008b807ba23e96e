"""Backend selection for the Monte Carlo hot loops.

The simulation kernels exist twice: a numba @njit version and a pure numpy
version with identical semantics (both consume the same pre-drawn arrays, so
they produce bit-identical counts). Selection order:

* ``RANDROUND_BACKEND=numpy`` forces the numpy path,
* ``RANDROUND_BACKEND=numba`` requires numba and fails loudly without it,
* unset: numba when importable, numpy otherwise.
"""

from __future__ import annotations

import os

ENV_VAR = "RANDROUND_BACKEND"
BACKENDS = ("numba", "numpy")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def selected_backend(override: str | None = None) -> str:
    choice = override if override is not None else os.environ.get(ENV_VAR, "")
    choice = choice.strip().lower()
    if choice and choice not in BACKENDS:
        raise ValueError(
            f"unknown backend {choice!r}; pick one of {', '.join(BACKENDS)}"
        )
    if choice == "numba" and not numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    if not choice:
        choice = "numba" if numba_available() else "numpy"
    return choice

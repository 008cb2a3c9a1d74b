"""Numba/numpy backend selection for the hot tree kernels.

Set ``VIMLAB_NUMBA=0`` (or ``false``/``off``) before import to force the
pure-numpy fallback kernels. The default is to use numba whenever it can be
imported. Both backends are kept importable side by side so
``benchmarks/bench_backends.py`` can time them against each other.
"""

import os

_FALSEY = {"0", "false", "off", "no"}


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in _FALSEY


NUMBA_REQUESTED = _env_flag("VIMLAB_NUMBA", True)

try:
    from numba import njit  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via subprocess in tests
    NUMBA_AVAILABLE = False

NUMBA_ENABLED = NUMBA_REQUESTED and NUMBA_AVAILABLE


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

"""Hot numeric kernels with a compiled core and a numpy fallback.

The Cython extension is used when importable; set GENCOMP_FORCE_PYTHON=1 to
force the numpy reference implementation. Both backends share contracts and
are cross-checked in the test suite; benchmarks/bench_kernels.py compares
their throughput.
"""
from __future__ import annotations

import os

import numpy as np

from . import reference

if os.environ.get("GENCOMP_FORCE_PYTHON"):
    _backend = reference
    HAVE_EXT = False
else:
    try:
        from . import _ext as _backend  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        _backend = reference
        HAVE_EXT = False

BACKEND = "ext" if HAVE_EXT else "python"


def _rows(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(-1, x.shape[-1])


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis."""
    return _backend.softmax2d(_rows(x)).reshape(x.shape)


def softmax_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return _backend.softmax2d_bwd(_rows(y), _rows(dy)).reshape(y.shape)


def layernorm(x: np.ndarray, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Normalize the last axis; returns (y, rstd) with rstd shaped (rows,)."""
    y, rstd = _backend.layernorm2d(_rows(x), eps)
    return y.reshape(x.shape), rstd


def layernorm_bwd(y: np.ndarray, rstd: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return _backend.layernorm2d_bwd(_rows(y), rstd, _rows(dy)).reshape(y.shape)


def gelu(x: np.ndarray) -> np.ndarray:
    return _backend.gelu(np.ascontiguousarray(x).ravel()).reshape(x.shape)


def gelu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return _backend.gelu_bwd(
        np.ascontiguousarray(x).ravel(), np.ascontiguousarray(dy).ravel()
    ).reshape(x.shape)

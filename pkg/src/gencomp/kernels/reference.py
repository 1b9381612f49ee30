"""Pure-numpy kernels. Same contracts as the compiled extension.

All functions take 2-D (rows, n) or flat arrays; the package __init__ wraps
them with shape handling. Forward/backward pairs are written so a training
step never needs more cached state than what these return.
"""
from __future__ import annotations

import numpy as np

GELU_C = float(np.sqrt(2.0 / np.pi))
GELU_A = 0.044715


def softmax2d(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    e /= e.sum(axis=1, keepdims=True)
    return e


def softmax2d_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    s = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - s)


def layernorm2d(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    return xc * rstd[:, None], rstd


def layernorm2d_bwd(y: np.ndarray, rstd: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # y is the normalized output; dx = rstd * (dy - mean(dy) - y * mean(dy * y))
    m1 = dy.mean(axis=1, keepdims=True)
    m2 = (dy * y).mean(axis=1, keepdims=True)
    return rstd[:, None] * (dy - m1 - y * m2)


def gelu(x: np.ndarray) -> np.ndarray:
    u = GELU_C * (x + GELU_A * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    u = GELU_C * (x + GELU_A * x**3)
    t = np.tanh(u)
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)

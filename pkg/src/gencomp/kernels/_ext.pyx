# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: same contracts as reference.py, float32/float64 fused.

Row reductions accumulate in double for both precisions, matching the
reference implementation closely (parity asserted in tests, not bitwise)."""
import numpy as np

from libc.math cimport exp, expf, floorf, tanh, tanhf, sqrt
from libc.string cimport memcpy

ctypedef fused real:
    float
    double

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


cdef float _EXP_HI = 88.02
cdef float _EXP_LO = -87.33654
cdef float _LOG2E = 1.44269504088896341
cdef float _LN2_HI = 0.693359375
cdef float _LN2_LO = -2.12194440e-4
cdef float _EP0 = 1.9875691500e-4
cdef float _EP1 = 1.3981999507e-3
cdef float _EP2 = 8.3334519073e-3
cdef float _EP3 = 4.1665795894e-2
cdef float _EP4 = 1.6666665459e-1
cdef float _EP5 = 5.0000001201e-1
cdef float _HALF = 0.5
cdef float _ONE = 1.0


cdef inline float _fast_expf(float x) noexcept nogil:
    # Cephes-style expf: range-reduce by ln2, degree-5 polynomial, scale by
    # 2^n through the exponent bits. ~2 ulp, no libm call, so the softmax
    # loop vectorizes. Clamps keep 2^n in range; NaN falls through both
    # clamps and propagates.
    cdef float z, p, scale
    cdef int n
    cdef unsigned int bits
    if x > _EXP_HI:
        x = _EXP_HI
    if x < _EXP_LO:
        x = _EXP_LO
    z = floorf(_LOG2E * x + _HALF)
    n = <int>z
    x -= z * _LN2_HI
    x -= z * _LN2_LO
    p = _EP0
    p = p * x + _EP1
    p = p * x + _EP2
    p = p * x + _EP3
    p = p * x + _EP4
    p = p * x + _EP5
    p = p * x * x + x + _ONE
    bits = (<unsigned int>(n + 127)) << 23
    memcpy(&scale, &bits, 4)
    return p * scale


def softmax2d(real[:, ::1] x):
    xa = np.asarray(x)
    out_arr = np.empty_like(xa)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef real m, inv
    cdef double s
    # Separate passes: the exp loop has no cross-iteration dependency, so the
    # compiler can vectorize it (-fno-math-errno enables the libmvec expansion).
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, n):
            if x[i, j] > m:
                m = x[i, j]
        if real is float:
            for j in range(n):
                out[i, j] = _fast_expf(x[i, j] - m)
        else:
            for j in range(n):
                out[i, j] = exp(x[i, j] - m)
        s = 0.0
        for j in range(n):
            s += out[i, j]
        inv = <real>(1.0 / s)
        for j in range(n):
            out[i, j] = out[i, j] * inv
    return out_arr


def softmax2d_bwd(real[:, ::1] y, real[:, ::1] dy):
    out_arr = np.empty_like(np.asarray(y))
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, rows = y.shape[0], n = y.shape[1]
    cdef double s
    for i in range(rows):
        s = 0.0
        for j in range(n):
            s += <double>dy[i, j] * <double>y[i, j]
        for j in range(n):
            out[i, j] = <real>(y[i, j] * (dy[i, j] - s))
    return out_arr


def layernorm2d(real[:, ::1] x, double eps):
    xa = np.asarray(x)
    y_arr = np.empty_like(xa)
    rstd_arr = np.empty(x.shape[0], dtype=xa.dtype)
    cdef real[:, ::1] y = y_arr
    cdef real[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef double mu, var, d, r
    for i in range(rows):
        mu = 0.0
        for j in range(n):
            mu += x[i, j]
        mu /= n
        var = 0.0
        for j in range(n):
            d = x[i, j] - mu
            var += d * d
        var /= n
        r = 1.0 / sqrt(var + eps)
        rstd[i] = <real>r
        for j in range(n):
            y[i, j] = <real>((x[i, j] - mu) * r)
    return y_arr, rstd_arr


def layernorm2d_bwd(real[:, ::1] y, real[::1] rstd, real[:, ::1] dy):
    out_arr = np.empty_like(np.asarray(y))
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, rows = y.shape[0], n = y.shape[1]
    cdef double m1, m2
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(n):
            m1 += dy[i, j]
            m2 += <double>dy[i, j] * <double>y[i, j]
        m1 /= n
        m2 /= n
        for j in range(n):
            out[i, j] = <real>(rstd[i] * (dy[i, j] - m1 - y[i, j] * m2))
    return out_arr


def gelu(real[::1] x):
    out_arr = np.empty_like(np.asarray(x))
    cdef real[::1] out = out_arr
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double u, xi
    for i in range(n):
        xi = x[i]
        u = GELU_C * (xi + GELU_A * xi * xi * xi)
        if real is float:
            out[i] = <real>(0.5 * xi * (1.0 + tanhf(<float>u)))
        else:
            out[i] = <real>(0.5 * xi * (1.0 + tanh(u)))
    return out_arr


def gelu_bwd(real[::1] x, real[::1] dy):
    out_arr = np.empty_like(np.asarray(x))
    cdef real[::1] out = out_arr
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double u, t, du, xi
    for i in range(n):
        xi = x[i]
        u = GELU_C * (xi + GELU_A * xi * xi * xi)
        if real is float:
            t = tanhf(<float>u)
        else:
            t = tanh(u)
        du = GELU_C * (1.0 + 3.0 * GELU_A * xi * xi)
        out[i] = <real>(dy[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du))
    return out_arr

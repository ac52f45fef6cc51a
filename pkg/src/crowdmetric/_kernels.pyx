# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled risk-evaluation kernel: fused margin computation, loss/slope
evaluation, and gradient aggregation in one pass over the records.

Mirrors the contract of crowdmetric._kernels_np.erm_pass exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, log, log1p, sqrt

cnp.import_array()

DEF LOSS_HINGE = 0
DEF LOSS_LOGISTIC = 1
DEF LOSS_NLL_PROBIT = 2

cdef double SQRT1_2 = 0.7071067811865475244
cdef double INV_SQRT_2PI = 0.3989422804014326779
cdef double LOG_SQRT_2PI = 0.9189385332046727418


cdef inline double _logistic_value(double x, double beta) noexcept nogil:
    cdef double z = -beta * x
    if z > 0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _logistic_slope(double x, double beta) noexcept nogil:
    # -beta * sigmoid(-beta x), computed on the safe side of the exponent
    cdef double z = beta * x
    if z >= 0:
        return -beta * exp(-z) / (1.0 + exp(-z))
    return -beta / (1.0 + exp(z))


cdef inline double _probit_value(double x) noexcept nogil:
    cdef double t, m
    if x > -30.0:
        return -log(0.5 * erfc(-x * SQRT1_2))
    t = -x
    m = (1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t)) / t
    return 0.5 * t * t + LOG_SQRT_2PI - log(m)


cdef inline double _probit_slope(double x) noexcept nogil:
    cdef double t, phi, cdf
    if x > -30.0:
        cdf = 0.5 * erfc(-x * SQRT1_2)
        phi = INV_SQRT_2PI * exp(-0.5 * x * x)
        return -phi / cdf
    t = -x
    return -t / (1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t) - 15.0 / (t ** 6))


def erm_pass(
    double[::1] Q,
    double[:, ::1] T,
    cnp.int64_t[::1] i_idx,
    cnp.int64_t[::1] j_idx,
    cnp.int64_t[::1] k_idx,
    double[::1] y,
    int loss_code,
    double beta,
    double[::1] c_agg,
    double[:, ::1] A_agg,
):
    """One full pass over the records: mean loss plus gradient aggregates."""
    cdef Py_ssize_t N = i_idx.shape[0]
    cdef Py_ssize_t n = Q.shape[0]
    cdef Py_ssize_t K = T.shape[0]
    cdef Py_ssize_t t, i, j, k
    cdef double margin, value, slope, w, yy
    cdef double total = 0.0
    cdef double inv_n = 1.0 / N if N > 0 else 0.0

    c_agg[:] = 0.0
    A_agg[:, :] = 0.0

    with nogil:
        for t in range(N):
            i = i_idx[t]
            j = j_idx[t]
            k = k_idx[t]
            yy = y[t]
            margin = yy * (Q[i] - Q[j] + T[k, i] - T[k, j])
            if loss_code == LOSS_HINGE:
                if margin < 1.0:
                    value = 1.0 - margin
                    slope = -1.0
                else:
                    value = 0.0
                    slope = 0.0
            elif loss_code == LOSS_LOGISTIC:
                value = _logistic_value(margin, beta)
                slope = _logistic_slope(margin, beta)
            else:
                value = _probit_value(margin)
                slope = _probit_slope(margin)
            total += value
            w = slope * yy * inv_n
            c_agg[i] += w
            c_agg[j] -= w
            A_agg[i, k] += w
            A_agg[j, k] -= w
    return total * inv_n


def margins_only(
    double[::1] Q,
    double[:, ::1] T,
    cnp.int64_t[::1] i_idx,
    cnp.int64_t[::1] j_idx,
    cnp.int64_t[::1] k_idx,
    double[::1] y,
):
    """Record margins y * delta without gradient work."""
    cdef Py_ssize_t N = i_idx.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(N, dtype=np.float64)
    cdef double[::1] mv = out
    cdef Py_ssize_t t, i, j, k
    with nogil:
        for t in range(N):
            i = i_idx[t]
            j = j_idx[t]
            k = k_idx[t]
            mv[t] = y[t] * (Q[i] - Q[j] + T[k, i] - T[k, j])
    return out

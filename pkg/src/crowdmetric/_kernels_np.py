"""Pure-numpy implementation of the risk-evaluation kernel.

This is the fallback backend used when the compiled extension is not
available; both backends implement the same contract (see
:mod:`crowdmetric.kernels`).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, log_ndtr

LOSS_HINGE = 0
LOSS_LOGISTIC = 1
LOSS_NLL_PROBIT = 2

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _loss_value_slope(margins: np.ndarray, loss_code: int, beta: float):
    if loss_code == LOSS_HINGE:
        value = np.maximum(0.0, 1.0 - margins)
        slope = np.where(margins < 1.0, -1.0, 0.0)
    elif loss_code == LOSS_LOGISTIC:
        value = np.logaddexp(0.0, -beta * margins)
        slope = -beta * expit(-beta * margins)
    elif loss_code == LOSS_NLL_PROBIT:
        logcdf = log_ndtr(margins)
        value = -logcdf
        slope = -np.exp(-0.5 * margins * margins - _LOG_SQRT_2PI - logcdf)
    else:
        raise ValueError(f"unknown loss code {loss_code}")
    return value, slope


def erm_pass(Q, T, i_idx, j_idx, k_idx, y, loss_code, beta, c_agg, A_agg):
    """One full pass over the records: mean loss plus gradient aggregates.

    Writes the per-item metric-gradient coefficients into ``c_agg`` (length
    n) and the per-(item, user) linear-gradient coefficients into ``A_agg``
    (n x K); both are overwritten. Returns the mean loss.
    """
    n = Q.shape[0]
    K = T.shape[0]
    N = i_idx.shape[0]
    margins = y * (Q[i_idx] - Q[j_idx] + T[k_idx, i_idx] - T[k_idx, j_idx])
    value, slope = _loss_value_slope(margins, loss_code, beta)
    w = slope * y / N
    c_agg[:] = np.bincount(i_idx, weights=w, minlength=n) - np.bincount(
        j_idx, weights=w, minlength=n
    )
    flat_i = i_idx * K + k_idx
    flat_j = j_idx * K + k_idx
    A = np.bincount(flat_i, weights=w, minlength=n * K) - np.bincount(
        flat_j, weights=w, minlength=n * K
    )
    A_agg[:] = A.reshape(n, K)
    return float(value.sum() / N)


def margins_only(Q, T, i_idx, j_idx, k_idx, y):
    """Record margins y * delta without gradient work."""
    return y * (Q[i_idx] - Q[j_idx] + T[k_idx, i_idx] - T[k_idx, j_idx])

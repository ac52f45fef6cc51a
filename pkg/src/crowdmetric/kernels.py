"""Backend selection for the hot risk-evaluation kernel.

The compiled Cython extension is preferred when importable; otherwise the
pure-numpy implementation is used. Set CROWDMETRIC_PURE_PYTHON=1 to force the
fallback (useful for benchmarking and debugging). Both backends share one
contract:

    erm_pass(Q, T, i_idx, j_idx, k_idx, y, loss_code, beta, c_agg, A_agg)
        -> mean loss, filling the gradient aggregates in place
    margins_only(Q, T, i_idx, j_idx, k_idx, y) -> y * delta per record
"""

from __future__ import annotations

import os

from . import _kernels_np

LOSS_HINGE = _kernels_np.LOSS_HINGE
LOSS_LOGISTIC = _kernels_np.LOSS_LOGISTIC
LOSS_NLL_PROBIT = _kernels_np.LOSS_NLL_PROBIT

if os.environ.get("CROWDMETRIC_PURE_PYTHON"):
    _impl = _kernels_np
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "python"

erm_pass = _impl.erm_pass
margins_only = _impl.margins_only


def available_backends() -> dict:
    """Name -> module for every importable backend (used by benchmarks)."""
    backends = {"python": _kernels_np}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends

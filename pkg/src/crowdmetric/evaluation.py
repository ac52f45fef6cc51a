"""Prediction and recovery metrics, plus numerical validation of the
recovery-theory identities (exact excess-risk decomposition, KL lower bound,
centering-matrix singular values, closed-form measurement second moments)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import margins_only
from .linalg import pseudoinverse, smallest_singular_value
from .identifiability import feature_matrix
from .model import CrowdModel, LinkFunction, ResponseDataset, delta_table

EXACT_RISK_MAX_ITEMS = 60


@dataclass(frozen=True)
class MetricsReport:
    """Prediction accuracy and relative recovery errors.

    An error is None (with the matching flag set) when its denominator is
    zero and the ratio is undefined.
    """

    test_accuracy: float | None
    rel_metric_error: float | None
    rel_ideal_point_error: float | None
    rel_pseudo_error: float | None
    undefined: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "test_accuracy": self.test_accuracy,
            "rel_metric_error": self.rel_metric_error,
            "rel_ideal_point_error": self.rel_ideal_point_error,
            "rel_pseudo_error": self.rel_pseudo_error,
            "undefined": list(self.undefined),
        }


def test_accuracy(M_hat, V_hat, test: ResponseDataset, X) -> float:
    """Fraction of test labels matching sign of the predicted measurement.

    A zero prediction counts as +1 (second item preferred).
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    X = np.asarray(X, dtype=float)
    M = np.asarray(M_hat, dtype=float)
    V = np.asarray(V_hat, dtype=float)
    Q = np.einsum("ij,ij->j", X, M @ X)
    T = np.ascontiguousarray(V.T @ X)
    ones = np.ones(len(test))
    deltas = margins_only(
        Q,
        T,
        np.ascontiguousarray(test.i_idx),
        np.ascontiguousarray(test.j_idx),
        np.ascontiguousarray(test.k_idx),
        ones,
    )
    predictions = np.where(deltas < 0, -1.0, 1.0)
    return float(np.mean(predictions == test.y))


def relative_errors(M_hat, V_hat, U_hat, model: CrowdModel, test_acc: float | None = None) -> MetricsReport:
    """Relative metric, ideal-point, and pseudo-ideal-point errors.

    The ideal-point reference is the projection of the true points onto the
    row space of the true metric, since kernel components are unrecoverable.
    """
    M_hat = np.asarray(M_hat, dtype=float)
    V_hat = np.asarray(V_hat, dtype=float)
    undefined = []

    m_den = float(np.linalg.norm(model.M_star))
    if m_den == 0.0:
        rel_m = None
        undefined.append("rel_metric_error")
    else:
        rel_m = float(np.linalg.norm(M_hat - model.M_star)) / m_den

    v_den = float(np.linalg.norm(model.V_star))
    if v_den == 0.0:
        rel_v = None
        undefined.append("rel_pseudo_error")
    else:
        rel_v = float(np.linalg.norm(V_hat - model.V_star)) / v_den

    rel_u = None
    if U_hat is None:
        undefined.append("rel_ideal_point_error")
    else:
        U_hat = np.asarray(U_hat, dtype=float)
        U_ref = pseudoinverse(model.M_star) @ model.M_star @ model.U_star
        u_den = float(np.linalg.norm(U_ref))
        if u_den == 0.0:
            undefined.append("rel_ideal_point_error")
        else:
            rel_u = float(np.linalg.norm(U_hat - U_ref)) / u_den

    return MetricsReport(
        test_accuracy=test_acc,
        rel_metric_error=rel_m,
        rel_ideal_point_error=rel_u,
        rel_pseudo_error=rel_v,
        undefined=tuple(undefined),
    )


def kl_bernoulli(p: float, q: float) -> float:
    """KL(p || q) between Bernoulli distributions, interior parameters only."""
    if not (0.0 < p < 1.0) or not (0.0 < q < 1.0):
        raise ValueError("kl_bernoulli needs p, q strictly inside (0, 1)")
    return p * math.log(p / q) + (1.0 - p) * math.log((1.0 - p) / (1.0 - q))


def _guard_items(n: int):
    if n > EXACT_RISK_MAX_ITEMS:
        raise ValueError(f"exact enumeration guard: n={n} > {EXACT_RISK_MAX_ITEMS}")


def true_risk_exact(M, V, model: CrowdModel, link: LinkFunction, loss) -> float:
    """Exact expected loss under the response model, enumerating every pair,
    user, and label (no Monte Carlo)."""
    _guard_items(model.n)
    iu, ju = np.triu_indices(model.n, k=1)
    d_star = delta_table(model.M_star, model.V_star, model.X)[:, iu, ju]
    d_eval = delta_table(np.asarray(M, dtype=float), np.asarray(V, dtype=float), model.X)[:, iu, ju]
    p_neg = link(-d_star)
    # label y = -1 contributes loss(-delta), y = +1 contributes loss(+delta)
    loss_neg = loss.value(-d_eval)
    loss_pos = loss.value(d_eval)
    return float(np.mean(p_neg * loss_neg + (1.0 - p_neg) * loss_pos))


def excess_risk_kl(M, V, model: CrowdModel, link: LinkFunction) -> float:
    """Excess likelihood risk over the truth, via the KL decomposition:
    the average Bernoulli KL between true and modeled response laws."""
    _guard_items(model.n)
    iu, ju = np.triu_indices(model.n, k=1)
    d_star = delta_table(model.M_star, model.V_star, model.X)[:, iu, ju]
    d_eval = delta_table(np.asarray(M, dtype=float), np.asarray(V, dtype=float), model.X)[:, iu, ju]
    # KL(f(-d*) || f(-d)) summed stably in log space
    log_p = link.log(-d_star)
    log_1p = link.log(d_star)
    log_q = link.log(-d_eval)
    log_1q = link.log(d_eval)
    p = np.exp(log_p)
    kl = p * (log_p - log_q) + (1.0 - p) * (log_1p - log_1q)
    return float(np.mean(kl))


def c_f(link: LinkFunction, gamma: float) -> float:
    """Smallest link slope over measurements bounded by gamma.

    Both supported links have an even, bell-shaped derivative, so the minimum
    over |x| <= gamma sits at the boundary.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return float(link.derivative(gamma))


@dataclass(frozen=True)
class RecoveryBoundReport:
    sigma_min_centered: float   # sigma_min of the centered feature matrix
    lhs: float                  # scaled parameter error
    excess_risk: float
    c_f_value: float
    rhs: float                  # excess_risk / (4 C_f^2)
    slack: float                # rhs - lhs, nonnegative when assumptions hold
    gamma: float

    def as_dict(self) -> dict:
        return {
            "sigma_min_centered": self.sigma_min_centered,
            "lhs": self.lhs,
            "excess_risk": self.excess_risk,
            "c_f": self.c_f_value,
            "rhs": self.rhs,
            "slack": self.slack,
            "gamma": self.gamma,
        }


def measurement_bound(M, V, model: CrowdModel) -> float:
    """Largest |delta| over all pairs and users at the given parameters."""
    iu, ju = np.triu_indices(model.n, k=1)
    vals = delta_table(np.asarray(M, dtype=float), np.asarray(V, dtype=float), model.X)[:, iu, ju]
    return float(np.abs(vals).max()) if vals.size else 0.0


def recovery_bound_report(
    M_hat, V_hat, model: CrowdModel, link: LinkFunction, gamma: float | None = None
) -> RecoveryBoundReport:
    """Both sides of the recovery lower bound tying parameter error to excess
    risk through the centered feature spectrum.

    When gamma is omitted it is set to the largest |delta| across the true
    and estimated parameters, the smallest value for which the bound's slope
    constant applies.
    """
    _guard_items(model.n)
    M_hat = np.asarray(M_hat, dtype=float)
    V_hat = np.asarray(V_hat, dtype=float)
    n, K = model.n, model.K
    if gamma is None:
        gamma = max(
            measurement_bound(model.M_star, model.V_star, model),
            measurement_bound(M_hat, V_hat, model),
        )
    cf = c_f(link, gamma)

    J = np.eye(n) - np.full((n, n), 1.0 / n)
    sigma = smallest_singular_value(J @ feature_matrix(model.X))
    err = float(
        np.linalg.norm(M_hat - model.M_star) ** 2
        + np.linalg.norm(V_hat - model.V_star) ** 2 / K
    )
    lhs = sigma**2 * err / n
    excess = excess_risk_kl(M_hat, V_hat, model, link)
    rhs = excess / (4.0 * cf**2)
    return RecoveryBoundReport(
        sigma_min_centered=float(sigma),
        lhs=lhs,
        excess_risk=excess,
        c_f_value=cf,
        rhs=rhs,
        slack=rhs - lhs,
        gamma=float(gamma),
    )


def expected_second_moments(X, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form second moments of the random measurement matrix.

    For a uniform pair and uniform user, the measurement at (i, j, k) acts as
    the d x (d+K) matrix [x_i x_i' - x_j x_j' | (x_i - x_j) e_k']. Returns
    (E[Z Z'], E[Z' Z]).
    """
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    if n < 2:
        raise ValueError("need at least two items")
    G = X.T @ X
    Dg = np.diag(np.sum(X * X, axis=0))
    xbar = X.mean(axis=1)
    scale = 2.0 / (n * (n - 1))

    E_zzt = scale * (X @ (n * Dg - G) @ X.T + n * (X @ X.T) - n**2 * np.outer(xbar, xbar))

    top_left = X @ (n * Dg - G) @ X.T
    coeff = np.sum((X - xbar[:, None]) * X, axis=0)  # (x_l - xbar)' x_l per item
    col = (n / K) * (X @ coeff)
    off = np.tile(col[:, None], (1, K))
    corner = (n / K) * (np.sum(X * X) - n * float(xbar @ xbar)) * np.eye(K)
    E_ztz = scale * np.block([[top_left, off], [off.T, corner]])
    return E_zzt, E_ztz


def enumerate_second_moments(X, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Second moments by exhaustive enumeration over pairs and users; the
    independent reference for :func:`expected_second_moments`."""
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    sum_zzt = np.zeros((d, d))
    sum_ztz = np.zeros((d + K, d + K))
    count = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            A = np.outer(X[:, i], X[:, i]) - np.outer(X[:, j], X[:, j])
            b = X[:, i] - X[:, j]
            for k in range(K):
                Z = np.zeros((d, d + K))
                Z[:, :d] = A
                Z[:, d + k] = b
                sum_zzt += Z @ Z.T
                sum_ztz += Z.T @ Z
                count += 1
    return sum_zzt / count, sum_ztz / count

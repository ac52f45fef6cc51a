"""Estimators: exact recovery from unquantized measurements and projected
subgradient minimization of the constrained empirical risk for binary
responses.

The solver walks (M, V) jointly with stepsize c/sqrt(t), applies the active
constraint scheme's projections after every step, and returns the best
feasible iterate seen. The gamma magnitude constraint from the theory is
never enforced; measurement-spread statistics are reported instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import LOSS_HINGE, LOSS_LOGISTIC, LOSS_NLL_PROBIT
from .linalg import (
    dykstra_project,
    frobenius_ball_project,
    half_dim,
    l2_ball_project,
    nu_inverse,
    nuclear_ball_project,
    nuclear_norm,
    numeric_rank,
    psd_project,
    sym_vec_upper,
)
from .identifiability import GammaSystem, assemble_gamma
from .model import LinkFunction, ResponseDataset

logger = logging.getLogger(__name__)

RADIUS_FLOOR = 1e-12
CONSTRAINT_RTOL = 1e-6

SCHEME_KINDS = (
    "frobenius_metric",
    "nuclear_full",
    "nuclear_metric",
    "nuclear_split",
    "psd_only",
    "identity_metric",
)


class UnidentifiableError(Exception):
    """Raised when the measurement system is rank deficient."""

    def __init__(self, rank: int, required: int):
        self.rank = rank
        self.required = required
        super().__init__(f"system rank {rank} < required {required}")


class SolverError(Exception):
    """Raised when the objective becomes non-finite; carries the trace."""

    def __init__(self, message: str, trace: np.ndarray):
        self.trace = trace
        super().__init__(message)


@dataclass(frozen=True)
class Loss:
    """Scalar convex loss applied to the margin y * delta.

    kind 'hinge' is max(0, 1 - x); 'logistic' is log(1 + exp(-beta x));
    'nll' is the negative log-likelihood -log f(x) of a link function.
    """

    kind: str = "logistic"
    beta: float = 1.0
    link: LinkFunction | None = None

    def __post_init__(self):
        if self.kind not in ("hinge", "logistic", "nll"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "logistic" and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.kind == "nll" and self.link is None:
            raise ValueError("nll loss needs a link function")

    def kernel_code(self) -> tuple[int, float]:
        if self.kind == "hinge":
            return LOSS_HINGE, 0.0
        if self.kind == "logistic":
            return LOSS_LOGISTIC, self.beta
        if self.link.kind == "logistic":
            return LOSS_LOGISTIC, self.link.beta
        return LOSS_NLL_PROBIT, 0.0

    def value(self, margins: np.ndarray) -> np.ndarray:
        from ._kernels_np import _loss_value_slope

        code, beta = self.kernel_code()
        return _loss_value_slope(np.asarray(margins, dtype=float), code, beta)[0]

    def slope(self, margins: np.ndarray) -> np.ndarray:
        from ._kernels_np import _loss_value_slope

        code, beta = self.kernel_code()
        return _loss_value_slope(np.asarray(margins, dtype=float), code, beta)[1]


@dataclass(frozen=True)
class ConstraintScheme:
    """Feasible set descriptor for the ERM solvers.

    Radii are floored at 1e-12 so degenerate oracle radii never produce an
    empty interior. Kinds and their radii:

    - frobenius_metric: ||M||_F <= lambda_F, ||v_k|| <= lambda_v
    - nuclear_full:     ||[M V]||_* <= lambda_star
    - nuclear_metric:   ||M||_* <= lambda_star, ||v_k|| <= lambda_v
    - nuclear_split:    ||M||_* <= lambda_M, ||V||_* <= lambda_V
    - psd_only:         M PSD only
    - identity_metric:  M fixed to I, ||v_k|| <= lambda_v (baseline)

    M PSD is enforced for every kind.
    """

    kind: str
    lambda_F: float | None = None
    lambda_v: float | None = None
    lambda_star: float | None = None
    lambda_M: float | None = None
    lambda_V: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        required = {
            "frobenius_metric": ("lambda_F", "lambda_v"),
            "nuclear_full": ("lambda_star",),
            "nuclear_metric": ("lambda_star", "lambda_v"),
            "nuclear_split": ("lambda_M", "lambda_V"),
            "psd_only": (),
            "identity_metric": ("lambda_v",),
        }[self.kind]
        for name in required:
            val = getattr(self, name)
            if val is None:
                raise ValueError(f"{self.kind} requires {name}")
            if val < 0:
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, max(float(val), RADIUS_FLOOR))

    def radii(self) -> dict:
        out = {}
        for name in ("lambda_F", "lambda_v", "lambda_star", "lambda_M", "lambda_V"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        return out


@dataclass(frozen=True)
class SolverConfig:
    step_scale: float = 1.0
    max_iters: int = 5000
    tol_objective: float = 0.0   # 0 disables early stopping
    seed: int = 0                # reserved for stochastic variants
    use_dykstra: bool = False
    dykstra_iters: int = 50

    @staticmethod
    def from_dict(cfg: dict) -> "SolverConfig":
        known = {k: cfg[k] for k in (
            "step_scale", "max_iters", "tol_objective", "seed",
            "use_dykstra", "dykstra_iters",
        ) if k in cfg}
        return SolverConfig(**known)


@dataclass
class FitResult:
    M_hat: np.ndarray
    V_hat: np.ndarray
    objective: float
    trace: np.ndarray            # best objective seen up to each iteration
    objective_trace: np.ndarray  # raw objective at each visited iterate
    iterations: int
    scheme: ConstraintScheme
    constraint_residuals: dict = field(default_factory=dict)


def _dataset_arrays(dataset: ResponseDataset):
    return (
        np.ascontiguousarray(dataset.i_idx),
        np.ascontiguousarray(dataset.j_idx),
        np.ascontiguousarray(dataset.k_idx),
        np.ascontiguousarray(dataset.y),
    )


def _risk_terms(M, V, X, arrays, code, beta, c_agg, A_agg):
    MX = M @ X
    Q = np.einsum("ij,ij->j", X, MX)
    T = np.ascontiguousarray(V.T @ X)
    i_idx, j_idx, k_idx, y = arrays
    return kernels.erm_pass(Q, T, i_idx, j_idx, k_idx, y, code, beta, c_agg, A_agg)


def empirical_risk(M, V, dataset: ResponseDataset, X, loss: Loss) -> float:
    """Mean loss over the records at the given parameters."""
    M = np.asarray(M, dtype=float)
    V = np.asarray(V, dtype=float)
    X = np.asarray(X, dtype=float)
    code, beta = loss.kernel_code()
    MX = M @ X
    Q = np.einsum("ij,ij->j", X, MX)
    T = np.ascontiguousarray(V.T @ X)
    i_idx, j_idx, k_idx, y = _dataset_arrays(dataset)
    margins = kernels.margins_only(Q, T, i_idx, j_idx, k_idx, y)
    if margins.size == 0:
        return 0.0
    return float(loss.value(margins).mean())


def risk_subgradient(M, V, dataset: ResponseDataset, X, loss: Loss):
    """Subgradient of the empirical risk.

    Returns (g_nu, g_V): the gradient with respect to the half-vectorized
    metric coordinates nu(M), and a d x K matrix of per-user gradients. At
    hinge kinks the zero-slope side is used. Note the nu coordinates already
    double the off-diagonal features, so their gradient is the plain upper
    triangle of the matrix gradient.
    """
    M = np.asarray(M, dtype=float)
    V = np.asarray(V, dtype=float)
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    K = V.shape[1]
    if len(dataset) == 0:
        return np.zeros(half_dim(X.shape[0])), np.zeros_like(V)
    code, beta = loss.kernel_code()
    c_agg = np.zeros(n)
    A_agg = np.zeros((n, K))
    _risk_terms(M, V, X, _dataset_arrays(dataset), code, beta, c_agg, A_agg)
    grad_M = (X * c_agg) @ X.T
    grad_V = X @ A_agg
    return sym_vec_upper(0.5 * (grad_M + grad_M.T)), grad_V


def _project(M, V, scheme: ConstraintScheme, cfg: SolverConfig):
    """Apply the scheme's projections; keeps M inside the PSD cone."""
    kind = scheme.kind
    if kind == "identity_metric":
        return np.eye(M.shape[0]), l2_ball_project(V, scheme.lambda_v)
    if kind == "psd_only":
        return psd_project(M), V
    if kind == "frobenius_metric":
        if cfg.use_dykstra:
            M = dykstra_project(
                M,
                [psd_project, lambda A: frobenius_ball_project(A, scheme.lambda_F)],
                max_iters=cfg.dykstra_iters,
            )
            M = frobenius_ball_project(psd_project(M), scheme.lambda_F)
        else:
            M = frobenius_ball_project(psd_project(M), scheme.lambda_F)
        return M, l2_ball_project(V, scheme.lambda_v)
    if kind == "nuclear_metric":
        M = psd_project(nuclear_ball_project(M, scheme.lambda_star))
        return M, l2_ball_project(V, scheme.lambda_v)
    if kind == "nuclear_split":
        M = psd_project(nuclear_ball_project(M, scheme.lambda_M))
        return M, nuclear_ball_project(V, scheme.lambda_V)
    # nuclear_full: joint ball, then PSD on the metric block; the PSD step can
    # nudge the joint norm past the radius, so rescale (scaling preserves PSD)
    d = M.shape[0]
    B = np.hstack([M, V])
    if cfg.use_dykstra:
        def psd_block(Bm):
            out = Bm.copy()
            out[:, :d] = psd_project(0.5 * (Bm[:, :d] + Bm[:, :d].T))
            return out

        B = dykstra_project(
            B,
            [psd_block, lambda A: nuclear_ball_project(A, scheme.lambda_star)],
            max_iters=cfg.dykstra_iters,
        )
    B = nuclear_ball_project(B, scheme.lambda_star)
    M = psd_project(0.5 * (B[:, :d] + B[:, :d].T))
    V = B[:, d:]
    joint = nuclear_norm(np.hstack([M, V]))
    if joint > scheme.lambda_star:
        scale = scheme.lambda_star / joint
        M = M * scale
        V = V * scale
    return M, V


def constraint_residuals(M, V, scheme: ConstraintScheme) -> dict:
    """Relative violation of each active constraint (0 when satisfied)."""
    out = {"min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])}

    def rel(value, radius):
        return max(0.0, (value - radius) / max(radius, RADIUS_FLOOR))

    kind = scheme.kind
    if kind == "frobenius_metric":
        out["frobenius"] = rel(float(np.linalg.norm(M)), scheme.lambda_F)
        vmax = float(np.linalg.norm(V, axis=0).max()) if V.size else 0.0
        out["v_l2"] = rel(vmax, scheme.lambda_v)
    elif kind == "nuclear_full":
        out["joint_nuclear"] = rel(nuclear_norm(np.hstack([M, V])), scheme.lambda_star)
    elif kind == "nuclear_metric":
        out["metric_nuclear"] = rel(nuclear_norm(M), scheme.lambda_star)
        vmax = float(np.linalg.norm(V, axis=0).max()) if V.size else 0.0
        out["v_l2"] = rel(vmax, scheme.lambda_v)
    elif kind == "nuclear_split":
        out["metric_nuclear"] = rel(nuclear_norm(M), scheme.lambda_M)
        out["v_nuclear"] = rel(nuclear_norm(V), scheme.lambda_V)
    elif kind == "identity_metric":
        vmax = float(np.linalg.norm(V, axis=0).max()) if V.size else 0.0
        out["v_l2"] = rel(vmax, scheme.lambda_v)
    return out


def fit_erm(
    dataset: ResponseDataset,
    X,
    loss: Loss,
    scheme: ConstraintScheme,
    cfg: SolverConfig | None = None,
) -> FitResult:
    """Projected subgradient descent on the constrained empirical risk.

    Starts from the feasible origin (identity for the identity baseline),
    steps with c/sqrt(t), projects after every step, and returns the best
    feasible iterate. A final PSD projection (plus ball enforcement) is
    applied to the returned parameters.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit an empty dataset")
    cfg = cfg or SolverConfig()
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    K = dataset.n_users
    code, beta = loss.kernel_code()
    arrays = _dataset_arrays(dataset)

    fixed_identity = scheme.kind == "identity_metric"
    M = np.eye(d) if fixed_identity else np.zeros((d, d))
    V = np.zeros((d, K))
    c_agg = np.zeros(n)
    A_agg = np.zeros((n, K))

    raw = np.empty(cfg.max_iters + 1)
    best = np.empty(cfg.max_iters + 1)
    best_obj = math.inf
    best_M, best_V = M.copy(), V.copy()
    stall_window = 500
    last_improvement = 0
    t_done = 0

    for t in range(1, cfg.max_iters + 1):
        risk = _risk_terms(M, V, X, arrays, code, beta, c_agg, A_agg)
        if not math.isfinite(risk):
            raise SolverError(f"objective became non-finite at iteration {t}", raw[: t - 1])
        raw[t - 1] = risk
        if risk < best_obj:
            if best_obj - risk > cfg.tol_objective:
                last_improvement = t
            best_obj = risk
            best_M, best_V = M.copy(), V.copy()
        best[t - 1] = best_obj
        t_done = t

        if cfg.tol_objective > 0 and t - last_improvement >= stall_window:
            break

        eta = cfg.step_scale / math.sqrt(t)
        if not fixed_identity:
            grad_M = (X * c_agg) @ X.T
            M = M - eta * (0.5 * (grad_M + grad_M.T))
        V = V - eta * (X @ A_agg)
        M, V = _project(M, V, scheme, cfg)

    final_risk = empirical_risk(M, V, dataset, X, loss)
    raw[t_done] = final_risk
    if final_risk < best_obj:
        best_obj = final_risk
        best_M, best_V = M.copy(), V.copy()
    best[t_done] = best_obj

    # returned parameters get one more PSD projection and ball enforcement
    M_out, V_out = _project(best_M, best_V, scheme, replace(cfg, use_dykstra=False))
    objective = empirical_risk(M_out, V_out, dataset, X, loss)

    return FitResult(
        M_hat=M_out,
        V_hat=V_out,
        objective=objective,
        trace=best[: t_done + 1].copy(),
        objective_trace=raw[: t_done + 1].copy(),
        iterations=t_done,
        scheme=scheme,
        constraint_residuals=constraint_residuals(M_out, V_out, scheme),
    )


def solve_unquantized(X, scheme, delta_values) -> tuple[np.ndarray, np.ndarray]:
    """Exact least-squares recovery of (M, V) from unquantized measurements.

    ``delta_values`` is either the stacked measurement vector (user blocks in
    order) or a per-user list. Raises UnidentifiableError when the system is
    rank deficient at the default tolerance.
    """
    system = assemble_gamma(np.asarray(X, dtype=float), scheme)
    gamma = system.gamma
    if isinstance(delta_values, (list, tuple)):
        rhs = np.concatenate([np.asarray(v, dtype=float).ravel() for v in delta_values])
    else:
        rhs = np.asarray(delta_values, dtype=float).ravel()
    if rhs.shape[0] != gamma.shape[0]:
        raise ValueError(f"expected {gamma.shape[0]} measurements, got {rhs.shape[0]}")
    required = system.n_params
    rank = numeric_rank(gamma)
    if rank < required:
        raise UnidentifiableError(rank, required)
    theta, *_ = np.linalg.lstsq(gamma, rhs, rcond=None)
    d = np.asarray(X).shape[0]
    D = half_dim(d)
    M = nu_inverse(theta[:D])
    V = theta[D:].reshape(scheme.n_users, d).T
    return M, V


def recover_ideal_points(M_hat, V_hat, alpha: float | None = None) -> np.ndarray:
    """Ideal points from a metric and pseudo-ideal points.

    With regularization alpha > 0 returns -2 (4 M^2 + alpha I)^{-1} M' v per
    user (default alpha = d, the Gaussian-prior MAP choice). With alpha = 0
    the exact relation -M^{-1} v / 2 is used, via the pseudoinverse when M is
    singular.
    """
    M = np.asarray(M_hat, dtype=float)
    V = np.asarray(V_hat, dtype=float)
    d = M.shape[0]
    if alpha is None:
        alpha = float(d)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0.0:
        if numeric_rank(M) < d:
            Minv = np.linalg.pinv(M, rcond=1e-12)
        else:
            Minv = np.linalg.inv(M)
        return -0.5 * Minv @ V
    A = 4.0 * (M @ M) + alpha * np.eye(d)
    return -2.0 * np.linalg.solve(A, M.T @ V)


def oracle_hyperparameters(model, scheme_kind: str) -> ConstraintScheme:
    """Smallest constraint radii that still contain the ground truth."""
    M = model.M_star
    U = model.U_star
    V = model.V_star
    lam_v = 2.0 * float(np.linalg.norm(M @ U, axis=0).max()) if U.size else 0.0
    if scheme_kind == "frobenius_metric":
        return ConstraintScheme("frobenius_metric", lambda_F=float(np.linalg.norm(M)), lambda_v=lam_v)
    if scheme_kind == "nuclear_full":
        return ConstraintScheme("nuclear_full", lambda_star=nuclear_norm(np.hstack([M, V])))
    if scheme_kind == "nuclear_metric":
        return ConstraintScheme("nuclear_metric", lambda_star=nuclear_norm(M), lambda_v=lam_v)
    if scheme_kind == "nuclear_split":
        return ConstraintScheme(
            "nuclear_split",
            lambda_M=nuclear_norm(M),
            lambda_V=2.0 * nuclear_norm(M @ U),
        )
    if scheme_kind == "psd_only":
        return ConstraintScheme("psd_only")
    if scheme_kind == "identity_metric":
        return ConstraintScheme("identity_metric", lambda_v=lam_v)
    raise ValueError(f"unknown scheme kind {scheme_kind!r}")


def oracle_single_user_radius(model, user: int) -> float:
    """Per-user joint nuclear radius ||[M*, -2 M* u_k]||_*."""
    v = model.V_star[:, user : user + 1]
    return nuclear_norm(np.hstack([model.M_star, v]))


def fit_single_user(
    dataset: ResponseDataset,
    X,
    loss: Loss,
    lambda_star_per_user,
    cfg: SolverConfig | None = None,
) -> list[FitResult | None]:
    """Independent joint-nuclear fit per user on that user's records only.

    Users with no records are skipped (None entry) with a warning.
    """
    results: list[FitResult | None] = []
    for k in range(dataset.n_users):
        mask = dataset.k_idx == k
        if not mask.any():
            logger.warning("user %d has no records; skipping", k)
            results.append(None)
            continue
        sub = ResponseDataset(
            dataset.n_items,
            1,
            dataset.i_idx[mask],
            dataset.j_idx[mask],
            np.zeros(int(mask.sum()), dtype=np.int64),
            dataset.y[mask],
        )
        scheme = ConstraintScheme("nuclear_full", lambda_star=float(lambda_star_per_user[k]))
        results.append(fit_erm(sub, X, loss, scheme, cfg))
    return results

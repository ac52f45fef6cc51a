"""Dense symmetric-matrix kernels: half-vectorization, cone/ball projections,
and rank utilities with explicit tolerances.

The half-vectorization order is fixed throughout the package: row-major upper
triangle, i.e. (0,0),(0,1),...,(0,d-1),(1,1),...,(d-1,d-1). A d x d symmetric
matrix maps to a vector of length D = d(d+1)/2.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

DEFAULT_RANK_TOL = 1e-9


def half_dim(d: int) -> int:
    """Length D = d(d+1)/2 of the half-vectorization of a d x d matrix."""
    return d * (d + 1) // 2


def dim_from_half(D: int) -> int:
    """Inverse of :func:`half_dim`; raises if D is not triangular."""
    d = int(round((np.sqrt(8 * D + 1) - 1) / 2))
    if half_dim(d) != D:
        raise ValueError(f"{D} is not d(d+1)/2 for any integer d")
    return d


def upper_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index arrays of the upper triangle in canonical order."""
    return np.triu_indices(d)


def sym_vec_upper(A: np.ndarray) -> np.ndarray:
    """Vectorize the upper triangle of a symmetric matrix in canonical order."""
    A = np.asarray(A, dtype=float)
    iu, ju = np.triu_indices(A.shape[0])
    return A[iu, ju].copy()


def nu(M: np.ndarray) -> np.ndarray:
    """Half-vectorize 2M - I*M: diagonal entries kept, off-diagonals doubled.

    Satisfies <nu(M), kron_sym(x)> == x' M x for symmetric M.
    """
    M = np.asarray(M, dtype=float)
    return sym_vec_upper(2.0 * M - np.diag(np.diag(M)))

def nu_inverse(h: np.ndarray) -> np.ndarray:
    """Rebuild the symmetric matrix M from nu(M). Exact inverse of :func:`nu`."""
    h = np.asarray(h, dtype=float)
    d = dim_from_half(h.shape[0])
    M = np.zeros((d, d))
    iu, ju = np.triu_indices(d)
    M[iu, ju] = h
    off = iu != ju
    M[iu[off], ju[off]] *= 0.5
    M[ju, iu] = M[iu, ju]
    return M


def kron_sym(x: np.ndarray) -> np.ndarray:
    """Unique entries of the Kronecker square of x: entry (i,j), i<=j, is x_i x_j."""
    x = np.asarray(x, dtype=float)
    iu, ju = np.triu_indices(x.shape[0])
    return x[iu] * x[ju]


def kron_sym_cols(X: np.ndarray) -> np.ndarray:
    """Apply :func:`kron_sym` to every column of a d x n matrix; returns D x n."""
    X = np.asarray(X, dtype=float)
    iu, ju = np.triu_indices(X.shape[0])
    return X[iu, :] * X[ju, :]


def psd_project(A: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalues clipped at 0)."""
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    w, Q = np.linalg.eigh(A)
    if w[0] >= 0.0:
        return A
    w = np.clip(w, 0.0, None)
    return (Q * w) @ Q.T


def frobenius_ball_project(A: np.ndarray, radius: float) -> np.ndarray:
    """Project onto {X : ||X||_F <= radius} by radial scaling."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    A = np.asarray(A, dtype=float)
    nrm = np.linalg.norm(A)
    if nrm <= radius:
        return A
    return A * (radius / nrm)


def l2_ball_project(v: np.ndarray, radius: float) -> np.ndarray:
    """Project a vector (or each column of a matrix) onto the l2 ball."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        nrm = np.linalg.norm(v)
        return v if nrm <= radius else v * (radius / nrm)
    nrms = np.linalg.norm(v, axis=0)
    scale = np.minimum(1.0, radius / np.maximum(nrms, 1e-300))
    return v * scale


def simplex_cap_project(s: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of s onto {w : w >= 0, sum(w) <= radius}.

    Sort-based exact solver (no iterative thresholding). For nonnegative
    inputs with sum(s) > radius this is the projection onto the scaled
    simplex boundary.
    """
    s = np.clip(np.asarray(s, dtype=float), 0.0, None)
    if s.sum() <= radius:
        return s
    u = np.sort(s)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, s.size + 1)
    rho = np.nonzero(u * k > (css - radius))[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.clip(s - theta, 0.0, None)


def nuclear_ball_project(B: np.ndarray, radius: float) -> np.ndarray:
    """Project onto the nuclear-norm ball {X : ||X||_* <= radius}.

    Computed by projecting the singular values onto the simplex-capped set
    {sigma >= 0, sum(sigma) <= radius}; inputs inside the ball are returned
    unchanged.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    B = np.asarray(B, dtype=float)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    if s.sum() <= radius:
        return B
    s_proj = simplex_cap_project(s, radius)
    return (U * s_proj) @ Vt


def nuclear_norm(B: np.ndarray) -> float:
    return float(np.linalg.svd(np.asarray(B, dtype=float), compute_uv=False).sum())


def numeric_rank(A: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    """Count of singular values above tol * sigma_max."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def pseudoinverse(A: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse zeroing singular values <= tol * sigma_max."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return np.linalg.pinv(np.asarray(A, dtype=float), rcond=tol)


def smallest_singular_value(A: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def integer_rank(A: np.ndarray) -> int:
    """Exact rank of an integer matrix by fraction-free Gaussian elimination.

    No floating tolerance is involved; intended for selection matrices and
    other small integer systems.
    """
    M = [[Fraction(int(v)) for v in row] for row in np.asarray(A)]
    if not M or not M[0]:
        return 0
    rows, cols = len(M), len(M[0])
    rank = 0
    pivot_row = 0
    for col in range(cols):
        pivot = None
        for r in range(pivot_row, rows):
            if M[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            continue
        M[pivot_row], M[pivot] = M[pivot], M[pivot_row]
        pv = M[pivot_row][col]
        for r in range(pivot_row + 1, rows):
            if M[r][col] != 0:
                factor = M[r][col] / pv
                M[r] = [a - factor * b for a, b in zip(M[r], M[pivot_row])]
        pivot_row += 1
        rank += 1
        if pivot_row == rows:
            break
    return rank


def dykstra_project(x0, projections, max_iters: int = 200, tol: float = 1e-12):
    """Dykstra's alternating projection onto an intersection of convex sets.

    ``projections`` is a sequence of callables, each an exact Euclidean
    projection onto one set. Returns the projection of ``x0`` onto the
    intersection (up to ``tol`` on the iterate change).
    """
    x = np.asarray(x0, dtype=float).copy()
    increments = [np.zeros_like(x) for _ in projections]
    for _ in range(max_iters):
        x_prev = x.copy()
        for idx, proj in enumerate(projections):
            y = x + increments[idx]
            x = proj(y)
            increments[idx] = y - x
        if np.linalg.norm(x - x_prev) <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x

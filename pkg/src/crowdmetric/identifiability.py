"""Assembly and analysis of the stacked linear system that determines whether
the shared metric and all pseudo-ideal points are identifiable from exact
difference-of-distance measurements.

The system matrix has one column block for the half-vectorized metric followed
by one d-column block per user; each user's row block pairs their selection
matrix with the quadratic and linear item features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import half_dim, kron_sym_cols, numeric_rank
from .selection import (
    PERMUTATION_SEARCH_GUARD,
    SelectionMatrix,
    UserScheme,
    is_incremental,
    selection_rank,
)

GAMMA_RANK_TOL = 1e-9
GOLDEN = 0.5 * (1.0 + math.sqrt(5.0))


def feature_matrix(X: np.ndarray) -> np.ndarray:
    """n x (D + d) matrix with row i = [kron_sym(x_i); x_i]."""
    X = np.asarray(X, dtype=float)
    return np.hstack([kron_sym_cols(X).T, X.T])


@dataclass(frozen=True)
class GammaSystem:
    """The stacked measurement operator for a scheme over items X.

    Columns are ordered [metric block | v_1 | ... | v_K]; row blocks follow
    user order.
    """

    gamma: np.ndarray
    X: np.ndarray
    scheme: UserScheme

    @property
    def n_params(self) -> int:
        d = self.X.shape[0]
        return half_dim(d) + d * self.scheme.n_users


def assemble_gamma(X: np.ndarray, scheme: UserScheme) -> GammaSystem:
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    if scheme.n_items != n:
        raise ValueError(f"scheme has {scheme.n_items} items but X has {n} columns")
    D = half_dim(d)
    K = scheme.n_users
    m_total = sum(scheme.row_counts)
    Phi = feature_matrix(X)  # n x (D + d)
    gamma = np.zeros((m_total, D + d * K))
    row = 0
    for k, S in enumerate(scheme.users):
        Sd = S.to_dense().astype(float)
        block = Sd @ Phi  # m_k x (D + d)
        gamma[row : row + S.n_rows, :D] = block[:, :D]
        gamma[row : row + S.n_rows, D + k * d : D + (k + 1) * d] = block[:, D:]
        row += S.n_rows
    return GammaSystem(gamma, X, scheme)


def is_identifiable(X: np.ndarray, scheme: UserScheme, tol: float = GAMMA_RANK_TOL) -> bool:
    """True iff the stacked system has full column rank at tolerance tol."""
    system = assemble_gamma(X, scheme)
    return numeric_rank(system.gamma, tol) == system.n_params


@dataclass(frozen=True)
class NecessaryReport:
    """Outcome of the three necessary conditions for identifiability.

    Each condition is evaluated both on the raw selection matrices and on the
    item-weighted products that the conditions actually constrain.
    """

    cond_a_ranks: tuple[int, ...]          # rank(S_k X^T) per user
    cond_a_pass: bool                      # all equal d
    cond_b_rank_sum: int                   # sum_k rank(S_k [features])
    cond_b_selection_rank_sum: int         # sum_k rank(S_k)
    cond_b_required: int                   # D + dK
    cond_b_pass: bool
    cond_c_rank: int                       # rank(S_T [features])
    cond_c_required: int                   # D + d
    cond_c_items_ok: bool                  # n >= D + d + 1
    cond_c_pass: bool

    @property
    def all_pass(self) -> bool:
        return self.cond_a_pass and self.cond_b_pass and self.cond_c_pass

    def as_dict(self) -> dict:
        return {
            "cond_a": {"ranks": list(self.cond_a_ranks), "pass": self.cond_a_pass},
            "cond_b": {
                "weighted_rank_sum": self.cond_b_rank_sum,
                "selection_rank_sum": self.cond_b_selection_rank_sum,
                "required": self.cond_b_required,
                "pass": self.cond_b_pass,
            },
            "cond_c": {
                "weighted_rank": self.cond_c_rank,
                "required": self.cond_c_required,
                "items_ok": self.cond_c_items_ok,
                "pass": self.cond_c_pass,
            },
            "all_pass": self.all_pass,
        }


def check_necessary(X: np.ndarray, scheme: UserScheme) -> NecessaryReport:
    """Evaluate the necessary conditions (user ranks, rank sum, total rank)."""
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    D = half_dim(d)
    K = scheme.n_users
    Phi = feature_matrix(X)

    a_ranks = []
    b_sum = 0
    b_sel_sum = 0
    for S in scheme.users:
        Sd = S.to_dense().astype(float)
        a_ranks.append(numeric_rank(Sd @ X.T))
        b_sum += numeric_rank(Sd @ Phi)
        b_sel_sum += selection_rank(S)
    stacked = scheme.stacked()
    c_rank = numeric_rank(stacked.to_dense().astype(float) @ Phi)

    required_b = D + d * K
    return NecessaryReport(
        cond_a_ranks=tuple(a_ranks),
        cond_a_pass=all(r == d for r in a_ranks),
        cond_b_rank_sum=b_sum,
        cond_b_selection_rank_sum=b_sel_sum,
        cond_b_required=required_b,
        cond_b_pass=b_sum >= required_b,
        cond_c_rank=c_rank,
        cond_c_required=D + d,
        cond_c_items_ok=n >= D + d + 1,
        cond_c_pass=(c_rank == D + d) and n >= D + d + 1,
    )


def _search_incremental_order(
    part2_rows: list[tuple[int, int]],
    used_items_per_user: list[set[int]],
    node_cap: int | None,
) -> list[int] | None:
    """Depth-first search for one ordering of the collective rows that stays
    incremental against every user's d-row block simultaneously.

    Candidates are tried in index order; prefixes that repeat both items for
    any user are pruned. Returns the ordering or None."""
    m = len(part2_rows)
    chosen: list[int] = []
    used_shared: set[int] = set()
    remaining = list(range(m))
    nodes = 0

    def admissible(idx: int) -> bool:
        p, q = part2_rows[idx]
        for used in used_items_per_user:
            p_new = p not in used and p not in used_shared
            q_new = q not in used and q not in used_shared
            if not (p_new or q_new):
                return False
        return True

    def dfs() -> bool:
        nonlocal nodes
        if len(chosen) == m:
            return True
        for idx in list(remaining):
            if node_cap is not None and nodes >= node_cap:
                return False
            if not admissible(idx):
                continue
            nodes += 1
            p, q = part2_rows[idx]
            chosen.append(idx)
            remaining.remove(idx)
            used_shared.add(p)
            used_shared.add(q)
            if dfs():
                return True
            chosen.pop()
            remaining.append(idx)
            remaining.sort()
            used_shared.clear()
            for i in chosen:
                used_shared.update(part2_rows[i])
        return False

    return chosen if dfs() else None


def check_sufficient_incremental(scheme: UserScheme) -> bool:
    """Test the incremental-partition sufficiency conditions.

    Requires a partitioned scheme with m_T = D + dK, m_k > d, and
    n >= D + d + 1. True iff every user's d-row block has rank d and one
    ordering of the pooled remaining rows is incremental against every user's
    block at once. The ordering search is exhaustive (with backtracking) up to
    D = 12 collective rows; beyond that it is capped and may miss orderings.
    """
    if scheme.part1_rows is None:
        raise ValueError("sufficiency check needs a partitioned scheme")
    d = len(scheme.part1_rows[0])
    D = half_dim(d)
    K = scheme.n_users
    n = scheme.n_items
    m_total = sum(scheme.row_counts)
    if m_total != D + d * K:
        raise ValueError(f"m_T={m_total} but the construction requires D+dK={D + d * K}")
    if any(m <= d for m in scheme.row_counts):
        raise ValueError("every user needs more than d rows")
    if n < D + d + 1:
        raise ValueError(f"need n >= D+d+1 = {D + d + 1}, got {n}")

    for k in range(K):
        if selection_rank(scheme.part1(k)) != d:
            return False

    part2 = scheme.collective_part2()
    used_per_user = []
    for k in range(K):
        used: set[int] = set()
        for p, q in scheme.part1(k).rows:
            used.add(p)
            used.add(q)
        used_per_user.append(used)

    cap = None if len(part2.rows) <= PERMUTATION_SEARCH_GUARD else 200_000
    order = _search_incremental_order(list(part2.rows), used_per_user, cap)
    return order is not None


def check_conjectured(scheme: UserScheme) -> bool:
    """Rank-based conjectured sufficiency: every d-row block has rank d and
    each stacked [block_k; collective rows] has full row rank."""
    if scheme.part1_rows is None:
        raise ValueError("conjectured check needs a partitioned scheme")
    d = len(scheme.part1_rows[0])
    part2 = scheme.collective_part2()
    for k in range(scheme.n_users):
        block = scheme.part1(k)
        if selection_rank(block) != d:
            return False
        stacked = block.stacked(part2)
        if selection_rank(stacked) != stacked.n_rows:
            return False
    return True


def single_user_thresholds(d: int, delta: float) -> tuple[int, int]:
    """Item and measurement counts guaranteeing single-user identifiability
    with probability >= 1 - delta under uniform random pair sampling."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    D = half_dim(d)
    n_min = math.ceil(GOLDEN * (D + d)) + 1
    m_min = math.ceil(GOLDEN * (1.0 + math.log(1.0 / delta)) * (D + d - 1)) + 1
    return n_min, m_min


def verify_incremental_stack(scheme: UserScheme, order: list[int]) -> bool:
    """Check that a given ordering of the collective rows is incremental
    against every user's block; mirrors the search's admissibility rule."""
    part2 = scheme.collective_part2()
    rows = [part2.rows[i] for i in order]
    for k in range(scheme.n_users):
        stacked = SelectionMatrix(
            scheme.n_items, scheme.part1(k).rows + tuple(rows)
        )
        if not is_incremental(stacked):
            return False
    return True

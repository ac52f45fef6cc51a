"""Selection matrices: sparse +1/-1 pair encodings, incrementality analysis,
rank equivalences, and random pair sampling with growth-rate bounds.

A selection matrix with rows (p_i, q_i) is the oriented incidence matrix of a
multigraph on the item set, so its real rank equals n minus the number of
connected components (isolated items included). That fact backs the fast rank
routine here; tests cross-check it against exact integer elimination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import integer_rank

NEWSPAN_MAX_ITEMS = 30
PERMUTATION_SEARCH_GUARD = 12
RANK_SAMPLING_CAP_FACTOR = 50.0


@dataclass(frozen=True)
class SelectionMatrix:
    """Pairs queried from an item set, one (p, q) per row (0-based indices).

    Row i of the dense form has +1 in column p_i and -1 in column q_i.
    """

    n_items: int
    rows: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_items < 2:
            raise ValueError("a selection matrix needs at least 2 items")
        object.__setattr__(self, "rows", tuple((int(p), int(q)) for p, q in self.rows))
        for p, q in self.rows:
            if p == q or not (0 <= p < self.n_items) or not (0 <= q < self.n_items):
                raise ValueError(f"invalid row ({p}, {q}) for n={self.n_items}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def to_dense(self) -> np.ndarray:
        """Dense m x n matrix with the +1/-1 pattern."""
        S = np.zeros((len(self.rows), self.n_items), dtype=np.int64)
        for i, (p, q) in enumerate(self.rows):
            S[i, p] = 1
            S[i, q] = -1
        return S

    def stacked(self, other: "SelectionMatrix") -> "SelectionMatrix":
        if other.n_items != self.n_items:
            raise ValueError("item counts differ")
        return SelectionMatrix(self.n_items, self.rows + other.rows)

    def submatrix(self, row_indices) -> "SelectionMatrix":
        return SelectionMatrix(self.n_items, tuple(self.rows[i] for i in row_indices))

    def to_text(self) -> str:
        """Serialize: header line then one 1-based 'p q' pair per line."""
        lines = [f"selection n={self.n_items}"]
        lines += [f"{p + 1} {q + 1}" for p, q in self.rows]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "SelectionMatrix":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("selection n="):
            raise ValueError("missing 'selection n=<n>' header")
        n = int(lines[0].split("=", 1)[1])
        rows = []
        for ln in lines[1:]:
            p, q = ln.split()
            rows.append((int(p) - 1, int(q) - 1))
        return SelectionMatrix(n, tuple(rows))


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def selection_rank(S: SelectionMatrix) -> int:
    """Exact rank of a selection matrix (n minus graph component count)."""
    uf = _UnionFind(S.n_items)
    rank = 0
    for p, q in S.rows:
        if uf.union(p, q):
            rank += 1
    return rank


def selection_rank_elimination(S: SelectionMatrix) -> int:
    """Rank by exact fraction-free elimination; slower reference path."""
    if S.n_rows == 0:
        return 0
    return integer_rank(S.to_dense())


def is_incremental(S: SelectionMatrix) -> bool:
    """True iff every row uses an item untouched by all earlier rows."""
    seen: set[int] = set()
    for p, q in S.rows:
        if p in seen and q in seen:
            return False
        seen.add(p)
        seen.add(q)
    return True


def find_incremental_permutation(S: SelectionMatrix):
    """Row order making S incremental, or None if rank(S) < m.

    Greedy reverse peeling: repeatedly remove a row owning an item unused by
    the remaining rows, then emit the removal order back to front. Succeeds
    exactly when the rows are linearly independent; ties are broken by lowest
    row index.
    """
    m = S.n_rows
    remaining = set(range(m))
    usage = np.zeros(S.n_items, dtype=np.int64)
    for p, q in S.rows:
        usage[p] += 1
        usage[q] += 1
    order_rev: list[int] = []
    while remaining:
        pick = -1
        for i in sorted(remaining):
            p, q = S.rows[i]
            if usage[p] == 1 or usage[q] == 1:
                pick = i
                break
        if pick < 0:
            return None
        p, q = S.rows[pick]
        usage[p] -= 1
        usage[q] -= 1
        remaining.discard(pick)
        order_rev.append(pick)
    return list(reversed(order_rev))


def complete_selection(n: int) -> SelectionMatrix:
    """All n-choose-2 pairs (i, j) with i < j, +1 at i and -1 at j."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rows = tuple((i, j) for i in range(n - 1) for j in range(i + 1, n))
    return SelectionMatrix(n, rows)


def sample_uniform_pairs(n: int, m: int, rng: np.random.Generator) -> SelectionMatrix:
    """m i.i.d. rows; p uniform on [n], q uniform on the remaining items."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rows = []
    for _ in range(m):
        p = int(rng.integers(n))
        q = int(rng.integers(n - 1))
        if q >= p:
            q += 1
        rows.append((p, q))
    return SelectionMatrix(n, tuple(rows))


def randrank_bound(r0: int, r: int, n: int, delta: float) -> tuple[float, float]:
    """Expected-count and tail bounds for rank growth under uniform sampling.

    Returns (sum_{i=r0+1}^{r} 1/(1 - i(i-1)/(n(n-1))),
             (1 + ln(1/delta)) times that sum).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if r0 < 1 or r < r0:
        raise ValueError("need 1 <= r0 <= r")
    total = 0.0
    for i in range(r0 + 1, r + 1):
        frac = i * (i - 1) / (n * (n - 1))
        if frac >= 1.0:
            raise ValueError(f"bound undefined: i(i-1) >= n(n-1) at i={i}")
        total += 1.0 / (1.0 - frac)
    return total, (1.0 + math.log(1.0 / delta)) * total


def sample_until_rank(
    S0: SelectionMatrix, target_rank: int, rng: np.random.Generator
) -> tuple[SelectionMatrix, int]:
    """Append i.i.d. uniform rows to S0 until the stacked rank reaches target.

    Returns the augmented matrix and the number of appended rows. Iterations
    are capped at 50x the expected-count bound to guarantee termination.
    """
    n = S0.n_items
    r0 = selection_rank(S0)
    if target_rank < r0 or target_rank > n - 1:
        raise ValueError("need rank(S0) <= target_rank <= n-1")
    if target_rank == r0:
        return S0, 0
    if r0 > min(S0.n_rows, n - 2):
        raise ValueError("seed rank must satisfy rank(S0) <= min(m, n-2)")

    expected, _ = randrank_bound(max(r0, 1), target_rank, n, 0.5)
    cap = max(16, int(math.ceil(RANK_SAMPLING_CAP_FACTOR * expected)))

    uf = _UnionFind(n)
    for p, q in S0.rows:
        uf.union(p, q)
    rank = r0
    rows = list(S0.rows)
    appended = 0
    while rank < target_rank:
        if appended >= cap:
            raise RuntimeError(f"sampling cap {cap} exceeded before rank {target_rank}")
        p = int(rng.integers(n))
        q = int(rng.integers(n - 1))
        if q >= p:
            q += 1
        rows.append((p, q))
        appended += 1
        if uf.union(p, q):
            rank += 1
    return SelectionMatrix(n, tuple(rows)), appended


def newspan_probability(S: SelectionMatrix):
    """Exact probability that a uniform random pair row lies in rowsp(S).

    Enumerates all n-choose-2 pairs; a pair is in the row space iff its two
    items are connected in the graph of S. Returned as a Fraction.
    """
    from fractions import Fraction

    n = S.n_items
    if n > NEWSPAN_MAX_ITEMS:
        raise ValueError(f"enumeration guard: n={n} > {NEWSPAN_MAX_ITEMS}")
    uf = _UnionFind(n)
    for p, q in S.rows:
        uf.union(p, q)
    in_span = sum(
        1 for i in range(n - 1) for j in range(i + 1, n) if uf.find(i) == uf.find(j)
    )
    return Fraction(in_span, n * (n - 1) // 2)


@dataclass(frozen=True)
class UserScheme:
    """Per-user selection matrices over a common item set.

    ``part1_rows`` optionally partitions each user's rows into a d-row block
    (indices listed per user) used for ideal-point identification; the
    remaining rows form that user's share of the collective metric block.
    """

    users: tuple[SelectionMatrix, ...]
    part1_rows: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if not self.users:
            raise ValueError("scheme needs at least one user")
        n = self.users[0].n_items
        if any(S.n_items != n for S in self.users):
            raise ValueError("all users must share the same item count")
        if self.part1_rows is not None:
            if len(self.part1_rows) != len(self.users):
                raise ValueError("partition must cover every user")
            sizes = {len(ix) for ix in self.part1_rows}
            if len(sizes) != 1:
                raise ValueError("partition blocks must share one row count")

    @property
    def n_items(self) -> int:
        return self.users[0].n_items

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def row_counts(self) -> tuple[int, ...]:
        return tuple(S.n_rows for S in self.users)

    def stacked(self) -> SelectionMatrix:
        rows: tuple[tuple[int, int], ...] = ()
        for S in self.users:
            rows += S.rows
        return SelectionMatrix(self.n_items, rows)

    def part1(self, k: int) -> SelectionMatrix:
        if self.part1_rows is None:
            raise ValueError("scheme carries no partition")
        return self.users[k].submatrix(self.part1_rows[k])

    def part2(self, k: int) -> SelectionMatrix:
        if self.part1_rows is None:
            raise ValueError("scheme carries no partition")
        keep = set(self.part1_rows[k])
        rest = [i for i in range(self.users[k].n_rows) if i not in keep]
        return self.users[k].submatrix(rest)

    def collective_part2(self) -> SelectionMatrix:
        """Stack of every user's non-partition rows, in user order."""
        rows: tuple[tuple[int, int], ...] = ()
        for k in range(self.n_users):
            rows += self.part2(k).rows
        return SelectionMatrix(self.n_items, rows)


def minimal_multiuser_construction(d: int, K: int) -> UserScheme:
    """Chain-based scheme meeting the sufficiency conditions at minimal size.

    Every user answers the d chain pairs on the first d+1 items plus an even
    share of the D chain pairs on the remaining items, giving m_k = d + D/K
    and n = D + d + 1. Requires D = d(d+1)/2 divisible by K.
    """
    D = d * (d + 1) // 2
    if D % K != 0:
        raise ValueError(f"D={D} must be divisible by K={K}")
    n = D + d + 1
    share = D // K
    part1 = tuple((i, i + 1) for i in range(d))
    chain2 = [(d + j, d + j + 1) for j in range(D)]
    users = []
    for k in range(K):
        rows = part1 + tuple(chain2[k * share : (k + 1) * share])
        users.append(SelectionMatrix(n, rows))
    return UserScheme(tuple(users), part1_rows=tuple(tuple(range(d)) for _ in range(K)))


def fixture_counterexample_necessary() -> UserScheme:
    """d=2, K=3 scheme passing all necessary conditions yet unidentifiable."""
    n = 6
    s1 = SelectionMatrix(n, ((2, 4), (0, 5), (0, 3)))
    s2 = SelectionMatrix(n, ((1, 4), (0, 2), (4, 5)))
    s3 = SelectionMatrix(n, ((1, 4), (0, 2), (1, 5)))
    return UserScheme((s1, s2, s3))


def fixture_counterexample_sufficiency() -> UserScheme:
    """d=2, K=2 scheme that is identifiable but fails the incremental search.

    Rows (1a),(1c) and (2a),(2b) are the forced d-row partition blocks: any
    other split repeats a pair inside a stacked matrix.
    """
    n = 6
    s1 = SelectionMatrix(n, ((0, 1), (1, 2), (2, 3), (3, 4)))
    s2 = SelectionMatrix(n, ((0, 1), (2, 3), (4, 5)))
    return UserScheme((s1, s2), part1_rows=((0, 2), (0, 1)))

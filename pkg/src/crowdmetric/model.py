"""Ground-truth generation, unquantized measurements, link-function response
simulation, dataset splitting, and the item/response CSV formats.

Conventions: items are columns of a d x n matrix X; user k's pseudo-ideal
point is v_k = -2 M u_k; a response y = -1 means the first item of the pair is
preferred. All randomness flows through explicit numpy Generators; parallel
trials should derive independent streams via :func:`spawn_rng`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_ndtr, ndtr


def spawn_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Deterministic independent stream derived from a master seed and keys.

    Documented split rule: the stream identity is the tuple
    (master_seed, key_1, ..., key_m) fed to numpy's SeedSequence.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing response link with f(x) = 1 - f(-x).

    kind 'logistic' uses f(x) = 1/(1 + exp(-beta x)); kind 'probit' uses the
    standard normal CDF (no sharpness parameter).
    """

    kind: str = "logistic"
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("logistic", "probit"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "logistic" and self.beta <= 0:
            raise ValueError("beta must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = expit(self.beta * x) if self.kind == "logistic" else ndtr(x)
        return out if out.ndim else float(out)

    def log(self, x):
        """log f(x), stable far into the lower tail."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return -np.logaddexp(0.0, -self.beta * x)
        return log_ndtr(x)

    def derivative(self, x):
        """f'(x); positive everywhere, maximal at 0 for both kinds."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return self.beta * expit(self.beta * x) * expit(-self.beta * x)
        return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CrowdModel:
    """Ground truth: items X (d x n), PSD metric, ideal points U (d x K).

    The pseudo-ideal points V = -2 M U are stored explicitly and checked for
    consistency on construction.
    """

    X: np.ndarray
    M_star: np.ndarray
    U_star: np.ndarray
    V_star: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "M_star", np.asarray(self.M_star, dtype=float))
        object.__setattr__(self, "U_star", np.asarray(self.U_star, dtype=float))
        expected = -2.0 * self.M_star @ self.U_star
        if self.V_star is None:
            object.__setattr__(self, "V_star", expected)
        else:
            object.__setattr__(self, "V_star", np.asarray(self.V_star, dtype=float))
            if not np.allclose(self.V_star, expected, atol=1e-12, rtol=1e-12):
                raise ValueError("V_star is inconsistent with -2 M U")
        w = np.linalg.eigvalsh(0.5 * (self.M_star + self.M_star.T))
        if w[0] < -1e-10:
            raise ValueError(f"metric is not PSD (min eigenvalue {w[0]:.3e})")

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.U_star.shape[1]


@dataclass(frozen=True)
class ResponseDataset:
    """Binary paired-comparison records: (item i, item j, user k, label y).

    Labels live in {-1, +1}; y = -1 means item i preferred. Indices are
    0-based.
    """

    n_items: int
    n_users: int
    i_idx: np.ndarray
    j_idx: np.ndarray
    k_idx: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        for name in ("i_idx", "j_idx", "k_idx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))
        N = self.i_idx.shape[0]
        if not (self.j_idx.shape[0] == self.k_idx.shape[0] == self.y.shape[0] == N):
            raise ValueError("record arrays must share one length")
        if N:
            if np.any(self.i_idx == self.j_idx):
                raise ValueError("a pair must reference two distinct items")
            if np.any((self.k_idx < 0) | (self.k_idx >= self.n_users)):
                raise ValueError("user index out of range")
            if not np.all(np.abs(self.y) == 1.0):
                raise ValueError("labels must be -1 or +1")

    def __len__(self) -> int:
        return int(self.i_idx.shape[0])

    def subset(self, mask_or_indices) -> "ResponseDataset":
        return ResponseDataset(
            self.n_items,
            self.n_users,
            self.i_idx[mask_or_indices],
            self.j_idx[mask_or_indices],
            self.k_idx[mask_or_indices],
            self.y[mask_or_indices],
        )

    def by_user(self) -> list["ResponseDataset"]:
        return [self.subset(self.k_idx == k) for k in range(self.n_users)]

    @staticmethod
    def concatenate(parts: list["ResponseDataset"]) -> "ResponseDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        n, K = parts[0].n_items, parts[0].n_users
        return ResponseDataset(
            n,
            K,
            np.concatenate([p.i_idx for p in parts]),
            np.concatenate([p.j_idx for p in parts]),
            np.concatenate([p.k_idx for p in parts]),
            np.concatenate([p.y for p in parts]),
        )


def gen_items_gaussian(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """d x n item matrix with i.i.d. N(0, I/d) columns."""
    return rng.standard_normal((d, n)) / math.sqrt(d)


def gen_users_gaussian(K: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """d x K ideal-point matrix with i.i.d. N(0, I/d) columns."""
    return rng.standard_normal((d, K)) / math.sqrt(d)


def gen_metric(d: int, r: int, rng: np.random.Generator, mode: str = "low_rank") -> np.ndarray:
    """Random PSD metric normalized to Frobenius norm d.

    'low_rank' draws an orthonormal d x r basis (QR of a Gaussian matrix,
    uniform over subspaces) and returns (d/sqrt(r)) L L'. 'full_rank' draws a
    Gaussian d x r factor and rescales L L' to Frobenius norm d; with r = d
    this avoids the scaled-identity degeneracy of the orthonormal route.
    """
    if not 1 <= r <= d:
        raise ValueError("need 1 <= r <= d")
    if mode == "low_rank":
        G = rng.standard_normal((d, r))
        L, _ = np.linalg.qr(G)
        M = (d / math.sqrt(r)) * (L @ L.T)
    elif mode == "full_rank":
        L = rng.standard_normal((d, r))
        M = L @ L.T
        M *= d / np.linalg.norm(M)
    else:
        raise ValueError(f"unknown metric mode {mode!r}")
    return 0.5 * (M + M.T)


def make_crowd_model(
    d: int, n: int, K: int, r: int, rng: np.random.Generator, metric_mode: str = "low_rank"
) -> CrowdModel:
    """Draw items, metric, and users in one shot."""
    X = gen_items_gaussian(n, d, rng)
    M = gen_metric(d, r, rng, mode=metric_mode)
    U = gen_users_gaussian(K, d, rng)
    return CrowdModel(X=X, M_star=M, U_star=U)


def delta(M: np.ndarray, v: np.ndarray, x_i: np.ndarray, x_j: np.ndarray) -> float:
    """Unquantized measurement x_i'Mx_i - x_j'Mx_j + v'(x_i - x_j).

    Negative means the first item is preferred.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    return float(x_i @ M @ x_i - x_j @ M @ x_j + v @ (x_i - x_j))


def delta_table(M: np.ndarray, V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """All measurements at once: entry [k, i, j] is delta for pair (i, j), user k."""
    X = np.asarray(X, dtype=float)
    quad = np.einsum("ji,jl,li->i", X, M, X)  # x_i' M x_i per item
    lin = np.asarray(V, dtype=float).T @ X    # K x n
    return quad[None, :, None] - quad[None, None, :] + lin[:, :, None] - lin[:, None, :]


def delta_records(
    M: np.ndarray, V: np.ndarray, X: np.ndarray, i_idx, j_idx, k_idx
) -> np.ndarray:
    """Measurement values for explicit (i, j, k) record arrays."""
    X = np.asarray(X, dtype=float)
    quad = np.einsum("ji,jl,li->i", X, np.asarray(M, dtype=float), X)
    lin = np.asarray(V, dtype=float).T @ X
    return quad[i_idx] - quad[j_idx] + lin[k_idx, i_idx] - lin[k_idx, j_idx]


def response_prob(link: LinkFunction, delta_value) -> float | np.ndarray:
    """P(y = -1) = f(-delta)."""
    return link(-np.asarray(delta_value, dtype=float))


def _draw_labels(link, deltas, rng, deterministic):
    if deterministic:
        # tie rule: delta == 0 resolves to y = +1
        return np.where(deltas < 0, -1.0, 1.0)
    p_neg = response_prob(link, deltas)
    return np.where(rng.random(deltas.shape) < p_neg, -1.0, 1.0)


def sample_dataset(
    model: CrowdModel,
    link: LinkFunction,
    size: int,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> ResponseDataset:
    """i.i.d. records: pair uniform over the n-choose-2 set, user uniform,
    label drawn from the link at the true measurement value."""
    n, K = model.n, model.K
    i_idx = rng.integers(n, size=size)
    j_idx = rng.integers(n - 1, size=size)
    j_idx += (j_idx >= i_idx).astype(np.int64)
    k_idx = rng.integers(K, size=size)
    deltas = delta_records(model.M_star, model.V_star, model.X, i_idx, j_idx, k_idx)
    y = _draw_labels(link, deltas, rng, deterministic)
    return ResponseDataset(n, K, i_idx, j_idx, k_idx, y)


def sample_user_pool(
    model: CrowdModel,
    link: LinkFunction,
    user: int,
    size: int,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> ResponseDataset:
    """Records for one fixed user, pairs uniform with replacement."""
    n = model.n
    i_idx = rng.integers(n, size=size)
    j_idx = rng.integers(n - 1, size=size)
    j_idx += (j_idx >= i_idx).astype(np.int64)
    k_idx = np.full(size, user, dtype=np.int64)
    deltas = delta_records(model.M_star, model.V_star, model.X, i_idx, j_idx, k_idx)
    y = _draw_labels(link, deltas, rng, deterministic)
    return ResponseDataset(n, model.K, i_idx, j_idx, k_idx, y)


def split_blocked_by_user(
    pools: list[ResponseDataset],
    train_size_per_user: int,
    rng: np.random.Generator,
) -> tuple[ResponseDataset, ResponseDataset]:
    """Per-user shuffle then split so every user contributes the same
    training count; the remainder of each pool becomes test data."""
    train_parts, test_parts = [], []
    for pool in pools:
        if len(pool) < train_size_per_user:
            raise ValueError(
                f"pool of size {len(pool)} cannot supply {train_size_per_user} training rows"
            )
        perm = rng.permutation(len(pool))
        train_parts.append(pool.subset(perm[:train_size_per_user]))
        test_parts.append(pool.subset(perm[train_size_per_user:]))
    return ResponseDataset.concatenate(train_parts), ResponseDataset.concatenate(test_parts)


def delta_spread(model: CrowdModel) -> dict:
    """Diagnostic statistics of |delta| over all pairs and users (the
    theoretical magnitude bound is reported, never enforced)."""
    table = delta_table(model.M_star, model.V_star, model.X)
    iu, ju = np.triu_indices(model.n, k=1)
    vals = np.abs(table[:, iu, ju])
    return {
        "max_abs": float(vals.max()) if vals.size else 0.0,
        "mean_abs": float(vals.mean()) if vals.size else 0.0,
    }


# ---------------------------------------------------------------------------
# CSV interfaces


def save_items_csv(path, X: np.ndarray) -> None:
    """Write items as rows: header item_id,f1..fd."""
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id"] + [f"f{a + 1}" for a in range(d)])
        for i in range(n):
            w.writerow([i + 1] + [repr(float(v)) for v in X[:, i]])


def load_items_csv(path, center: bool = False, maxnorm: bool = False) -> np.ndarray:
    """Read an item CSV back into a d x n matrix, in item_id order.

    ``center`` subtracts the mean item; ``maxnorm`` then divides by the
    largest item norm so max_i ||x_i|| = 1.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "item_id":
        raise ValueError("item CSV must start with an item_id header")
    d = len(rows[0]) - 1
    body = sorted(rows[1:], key=lambda r: int(r[0]))
    X = np.array([[float(v) for v in r[1:]] for r in body], dtype=float).T
    if X.shape[0] != d:
        raise ValueError("ragged item CSV")
    return preprocess_items(X, center=center, maxnorm=maxnorm)


def preprocess_items(X: np.ndarray, center: bool = False, maxnorm: bool = False) -> np.ndarray:
    X = np.asarray(X, dtype=float).copy()
    if center:
        X -= X.mean(axis=1, keepdims=True)
    if maxnorm:
        norms = np.linalg.norm(X, axis=0)
        peak = norms.max()
        if peak > 0:
            X /= peak
    return X


def save_responses_csv(path, dataset: ResponseDataset) -> None:
    """Write records: header user_id,item_i,item_j,y (all ids 1-based)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_i", "item_j", "y"])
        for i, j, k, y in zip(dataset.i_idx, dataset.j_idx, dataset.k_idx, dataset.y):
            w.writerow([k + 1, i + 1, j + 1, int(y)])


def load_responses_csv(path, n_items: int | None = None, n_users: int | None = None) -> ResponseDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["user_id", "item_i", "item_j", "y"]:
        raise ValueError("response CSV must start with user_id,item_i,item_j,y")
    body = rows[1:]
    k = np.array([int(r[0]) - 1 for r in body], dtype=np.int64)
    i = np.array([int(r[1]) - 1 for r in body], dtype=np.int64)
    j = np.array([int(r[2]) - 1 for r in body], dtype=np.int64)
    y = np.array([float(r[3]) for r in body])
    n_items = n_items if n_items is not None else (int(max(i.max(), j.max())) + 1 if len(body) else 0)
    n_users = n_users if n_users is not None else (int(k.max()) + 1 if len(body) else 0)
    return ResponseDataset(n_items, n_users, i, j, k, y)

"""Gaussian kernel, Gram matrices, empirical mean embeddings and MMD.

All squared distances are accumulated with numpy's pairwise summation over
the contiguous coordinate axis, one entry at a time, so every Gram entry is
bitwise identical to the corresponding :func:`kernel_eval` call no matter how
rows are distributed across worker threads.  Quadratic forms over Gram blocks
go through :func:`math.fsum`, which is exactly rounded and therefore
independent of summation order; this is what makes ``mmd(p, q)`` and
``mmd(q, p)`` agree bit for bit.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "Kernel",
    "Embedding",
    "MmdEstimate",
    "PermutationTestResult",
    "kernel_eval",
    "gram",
    "embed",
    "embedding_eval",
    "mmd",
    "mmd_unbiased",
    "permutation_test",
    "default_threads",
]

THREADS_ENV = "TRAJ_MMD_THREADS"

# Below this many multiply-adds a thread pool costs more than it saves.
_PARALLEL_MIN_WORK = 1 << 20


def default_threads() -> int:
    """Worker count for Gram computation, capped by ``TRAJ_MMD_THREADS``."""
    try:
        n = len(os.sched_getaffinity(0))
    except AttributeError:
        n = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be a positive integer, got {cap!r}")
    return n


@dataclass(frozen=True)
class Kernel:
    """A translation-invariant kernel with bandwidth ``sigma``.

    Only the Gaussian family ``exp(-|x - y|^2 / (2 sigma^2))`` is implemented;
    ``family`` exists so reports can say which kernel produced a number.
    """

    sigma: float
    family: Literal["gaussian"] = "gaussian"

    def __post_init__(self):
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma <= 0:
            raise InputError(f"kernel bandwidth must be positive and finite, got {self.sigma!r}")
        if self.family != "gaussian":
            raise InputError(f"unsupported kernel family {self.family!r}")
        object.__setattr__(self, "sigma", sigma)

    def __call__(self, x, y) -> float:
        return kernel_eval(self, x, y)

    def from_sqdist(self, d2):
        """Kernel value(s) from squared Euclidean distance(s)."""
        return np.exp(-np.asarray(d2, dtype=np.float64) / (2.0 * self.sigma * self.sigma))


def _as_vector(x, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InputError(f"{name} must be a 1-D feature vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise InputError(f"{name} has a non-finite coordinate at index {bad}")
    return v


def _as_matrix(samples, name: str = "samples") -> np.ndarray:
    """Stack a sample set into a C-contiguous ``(count, dim)`` float array."""
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        a = np.ascontiguousarray(samples, dtype=np.float64)
    else:
        rows = [np.asarray(s, dtype=np.float64) for s in samples]
        if not rows:
            raise InputError(f"{name} must be nonempty")
        dims = {r.shape for r in rows}
        if len(dims) != 1 or rows[0].ndim != 1:
            raise InputError(f"{name}: all samples must be 1-D vectors of one dimension, got shapes {sorted(dims)}")
        a = np.ascontiguousarray(np.stack(rows))
    if a.shape[0] == 0:
        raise InputError(f"{name} must be nonempty")
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise InputError(f"{name}: sample {i} has a non-finite coordinate at index {j}")
    return a


def _sqdist(x: np.ndarray, y: np.ndarray) -> float:
    d = x - y
    return float(np.sum(d * d))


def _sqdist_rows(A: np.ndarray, B: np.ndarray, rows: range) -> np.ndarray:
    out = np.empty((len(rows), B.shape[0]))
    for k, i in enumerate(rows):
        d = B - A[i]
        out[k] = np.sum(d * d, axis=1)
    return out


def pairwise_sqdist(A, B, threads: int | None = None) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``A`` and ``B``.

    Entry ``(i, j)`` is computed independently of every other entry, with a
    fixed summation order over coordinates.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    m = A.shape[0]
    if threads is None:
        threads = default_threads()
    threads = max(1, min(int(threads), m))
    if threads == 1 or A.size * B.shape[0] < _PARALLEL_MIN_WORK:
        return _sqdist_rows(A, B, range(m))
    bounds = np.linspace(0, m, threads + 1).astype(int)
    chunks = [range(bounds[k], bounds[k + 1]) for k in range(threads) if bounds[k] < bounds[k + 1]]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda r: _sqdist_rows(A, B, r), chunks))
    return np.vstack(parts)


def kernel_eval(kernel: Kernel, x, y) -> float:
    """Evaluate ``kernel`` at a pair of feature vectors."""
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.shape != yv.shape:
        raise InputError(f"dimension mismatch: {xv.size} vs {yv.size}")
    # same vectorized exp as gram(), so entries agree bitwise
    return float(kernel.from_sqdist(np.array([_sqdist(xv, yv)]))[0])


def gram(kernel: Kernel, A, B, threads: int | None = None) -> np.ndarray:
    """Dense matrix of ``kernel(A[i], B[j])``.

    Parameters
    ----------
    kernel : Kernel
    A, B : sequence of feature vectors or 2-D array
        Nonempty sample sets of one common dimension.
    threads : int, optional
        Worker threads; defaults to :func:`default_threads`.  The result does
        not depend on this value.

    Returns
    -------
    ndarray of shape ``(len(A), len(B))``
    """
    return kernel.from_sqdist(pairwise_sqdist(A, B, threads))


@dataclass(frozen=True, eq=False)
class Embedding:
    """Weighted empirical kernel mean embedding ``sum_i w_i k(samples[i], .)``.

    Build with :func:`embed`; the arrays are private read-only copies.
    """

    kernel: Kernel
    samples: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __call__(self, x) -> float:
        return embedding_eval(self, x)


def embed(kernel: Kernel, samples, weights: Sequence[float] | None = None) -> Embedding:
    """Empirical mean embedding of ``samples``; uniform weights by default."""
    S = _as_matrix(samples).copy()
    M = S.shape[0]
    if weights is None:
        w = np.full(M, 1.0 / M)
    else:
        w = np.array(weights, dtype=np.float64).reshape(-1)
        if w.size != M:
            raise InputError(f"{w.size} weights for {M} samples")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        if np.any(w < 0):
            raise InputError(f"negative weight at index {int(np.flatnonzero(w < 0)[0])}")
        total = math.fsum(w)
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"weights must sum to 1, got {total!r}")
        w = w / total
    S.setflags(write=False)
    w.setflags(write=False)
    return Embedding(kernel, S, w)


def embedding_eval(e: Embedding, x) -> float:
    """Evaluate the embedding as a function: ``sum_i w_i k(samples[i], x)``."""
    xv = _as_vector(x)
    if xv.size != e.dim:
        raise InputError(f"dimension mismatch: embedding has {e.dim}, point has {xv.size}")
    k = gram(e.kernel, e.samples, xv[None, :], threads=1)[:, 0]
    return math.fsum(e.weights * k)


@dataclass(frozen=True)
class MmdEstimate:
    """An MMD value and how it was estimated.

    ``value`` is the RKHS distance for the biased estimator.  For the
    unbiased estimator it is the signed square root of the U-statistic, so a
    negative squared estimate shows up as a negative value.
    """

    value: float
    estimator: Literal["biased", "unbiased"]
    m: int
    n: int

    @property
    def squared(self) -> float:
        return math.copysign(self.value * self.value, self.value)

    def __float__(self) -> float:
        return self.value


def _weighted_sum(K: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    # outer(a, b) is elementwise a_i * b_j, so outer(b, a) * K.T == (outer(a, b) * K).T bitwise
    return math.fsum((np.multiply.outer(a, b) * K).ravel())


def _mmd2_from_blocks(Kpp, Kqq, Kpq, wp, wq) -> float:
    pp = _weighted_sum(Kpp, wp, wp)
    qq = _weighted_sum(Kqq, wq, wq)
    pq = _weighted_sum(Kpq, wp, wq)
    return math.fsum((pp, qq, -2.0 * pq))


def _check_pair(p: Embedding, q: Embedding) -> None:
    if p.kernel != q.kernel:
        raise InputError(f"kernel mismatch: {p.kernel} vs {q.kernel}")
    if p.dim != q.dim:
        raise InputError(f"dimension mismatch: {p.dim} vs {q.dim}")


def mmd(p: Embedding, q: Embedding, threads: int | None = None) -> MmdEstimate:
    """Biased MMD: the RKHS norm of the difference of two embeddings.

    Expanded through the reproducing property as
    ``sqrt(wp' Kpp wp + wq' Kqq wq - 2 wp' Kpq wq)``; a negative argument can
    only come from rounding and is clamped to zero.
    """
    _check_pair(p, q)
    k = p.kernel
    Kpp = gram(k, p.samples, p.samples, threads)
    Kqq = gram(k, q.samples, q.samples, threads)
    Kpq = gram(k, p.samples, q.samples, threads)
    d2 = _mmd2_from_blocks(Kpp, Kqq, Kpq, p.weights, q.weights)
    return MmdEstimate(math.sqrt(max(0.0, d2)), "biased", p.size, q.size)


def _offdiag_mean(K: np.ndarray) -> float:
    n = K.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return math.fsum(K[mask]) / (n * (n - 1))


def mmd_unbiased(P, Q, kernel: Kernel, threads: int | None = None) -> MmdEstimate:
    """U-statistic MMD (diagonal kernel terms excluded), reported as signed sqrt."""
    A = _as_matrix(P, "P")
    B = _as_matrix(Q, "Q")
    m, n = A.shape[0], B.shape[0]
    if m < 2 or n < 2:
        raise InputError(f"unbiased MMD needs at least 2 samples per side, got {m} and {n}")
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    xx = _offdiag_mean(gram(kernel, A, A, threads))
    yy = _offdiag_mean(gram(kernel, B, B, threads))
    xy = math.fsum(gram(kernel, A, B, threads).ravel()) / (m * n)
    d2 = math.fsum((xx, yy, -2.0 * xy))
    return MmdEstimate(math.copysign(math.sqrt(abs(d2)), d2), "unbiased", m, n)


@dataclass(frozen=True)
class PermutationTestResult:
    observed: MmdEstimate
    p_value: float
    n_permutations: int
    seed: int
    n_exceeding: int


def permutation_test(
    P,
    Q,
    kernel: Kernel,
    n_permutations: int = 1000,
    seed: int = 0,
    threads: int | None = None,
) -> PermutationTestResult:
    """Two-sample permutation test with the biased MMD as statistic.

    The pooled Gram matrix is computed once; each permutation re-splits the
    pooled indices into groups of the original sizes.  The p-value uses the
    add-one rule ``(1 + #{permuted >= observed}) / (1 + n_permutations)``.
    The observed statistic equals ``mmd(embed(kernel, P), embed(kernel, Q))``
    bit for bit.
    """
    A = _as_matrix(P, "P")
    B = _as_matrix(Q, "Q")
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    n_permutations = int(n_permutations)
    if n_permutations < 1:
        raise InputError("n_permutations must be >= 1")
    if seed < 0:
        raise InputError("seed must be nonnegative")
    m, n = A.shape[0], B.shape[0]
    pooled = np.vstack([A, B])
    K = gram(kernel, pooled, pooled, threads)
    wp = np.full(m, 1.0 / m)
    wq = np.full(n, 1.0 / n)

    def stat(ip, iq):
        d2 = _mmd2_from_blocks(K[np.ix_(ip, ip)], K[np.ix_(iq, iq)], K[np.ix_(ip, iq)], wp, wq)
        return math.sqrt(max(0.0, d2))

    idx = np.arange(m + n)
    observed = stat(idx[:m], idx[m:])
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        perm = rng.permutation(m + n)
        if stat(perm[:m], perm[m:]) >= observed:
            exceed += 1
    return PermutationTestResult(
        observed=MmdEstimate(observed, "biased", m, n),
        p_value=(1 + exceed) / (1 + n_permutations),
        n_permutations=n_permutations,
        seed=int(seed),
        n_exceeding=exceed,
    )

"""Numerical kernels: thin SVD with a fixed sign convention, 1-D 2-means, support embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, eigvalsh

from .errors import DegenerateError, DomainError


@dataclass
class SvdFactorization:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def K(self) -> int:
        return self.singular_values.size

    @property
    def mu(self) -> np.ndarray:
        """Eigenvalues of ``A A^T`` (squared singular values), descending."""
        return self.singular_values ** 2

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def normalize_signs(U: np.ndarray, V: np.ndarray):
    """Flip each pair ``(U[:, k], V[:, k])`` so the largest-magnitude entry of ``U[:, k]`` is nonnegative.

    Ties on magnitude resolve to the first index, so the map is idempotent.
    """
    U = np.array(U, dtype=float, copy=True)
    V = np.array(V, dtype=float, copy=True)
    if U.size == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1
    V[:, flip] *= -1
    return U, V


def full_svd(A) -> SvdFactorization:
    """Thin SVD of ``A`` with ``K = min(M, N)`` triples, descending, sign-normalized."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DomainError("full_svd expects a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = normalize_signs(U, Vt.T)
    return SvdFactorization(s, U, V)


def top_singular_values(A, k: int = 1) -> np.ndarray:
    """Largest ``k`` singular values via the smaller Gram matrix; cheaper than a full SVD."""
    A = np.asarray(A, dtype=float)
    G = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    n = G.shape[0]
    ev = eigvalsh(G, subset_by_index=[n - k, n - 1])[::-1]
    return np.sqrt(np.maximum(ev, 0.0))


def top_singular_triples(A, k: int = 1) -> SvdFactorization:
    """Top ``k`` singular triples from an eigendecomposition of the smaller Gram matrix.

    Accurate for well-separated leading singular values; used by the Monte
    Carlo harness where a full SVD per trial would dominate the runtime.
    """
    A = np.asarray(A, dtype=float)
    M, N = A.shape
    if M <= N:
        w, Q = eigh(A @ A.T, subset_by_index=[M - k, M - 1])
        w, Q = w[::-1], Q[:, ::-1]
        s = np.sqrt(np.maximum(w, 0.0))
        U = Q
        V = (A.T @ U) / np.where(s > 0, s, 1.0)
    else:
        w, Q = eigh(A.T @ A, subset_by_index=[N - k, N - 1])
        w, Q = w[::-1], Q[:, ::-1]
        s = np.sqrt(np.maximum(w, 0.0))
        V = Q
        U = (A @ V) / np.where(s > 0, s, 1.0)
    U, V = normalize_signs(U, V)
    return SvdFactorization(s, U, V)


@dataclass
class TwoMeansSplit:
    upper_indices: np.ndarray
    lower_indices: np.ndarray
    threshold: float
    separation_score: float
    sse: float


def two_means_1d(values) -> TwoMeansSplit:
    """Exact two-cluster k-means on the real line.

    In one dimension an optimal 2-partition is a cut of the sorted values, so
    every cut between distinct neighbours is scored and the best kept. Ties go
    to the smaller upper cluster.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise DomainError("two_means_1d needs at least two values")
    if not np.all(np.isfinite(x)):
        raise DomainError("values must be finite")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if xs[0] == xs[-1]:
        raise DegenerateError("all values are equal; no split exists")

    y = xs - xs.mean()
    cs = np.cumsum(y)
    cs2 = np.cumsum(y * y)
    tot, tot2 = cs[-1], cs2[-1]
    i = np.arange(1, n)  # cut after position i-1: lower has i elements
    lo_sum, lo_sq = cs[:-1], cs2[:-1]
    hi_sum, hi_sq = tot - lo_sum, tot2 - lo_sq
    sse = (lo_sq - lo_sum ** 2 / i) + (hi_sq - hi_sum ** 2 / (n - i))
    sse = np.maximum(sse, 0.0)
    valid = xs[1:] > xs[:-1]
    sse = np.where(valid, sse, np.inf)
    best = sse.min()
    tol = 1e-12 * max(tot2, 1e-300)
    cut = int(np.flatnonzero(sse <= best + tol)[-1]) + 1

    upper = np.sort(order[cut:])
    lower = np.sort(order[:cut])
    thr = 0.5 * (xs[cut - 1] + xs[cut])
    score = float(xs[cut] * np.sqrt(n))
    return TwoMeansSplit(upper, lower, float(thr), score, float(sse[cut - 1]))


def embed_by_support(sub_vector, support_indices, n: int) -> np.ndarray:
    """Place ``sub_vector`` at ``support_indices`` of a zero vector of length ``n``."""
    sub = np.asarray(sub_vector, dtype=float).ravel()
    idx = np.asarray(support_indices, dtype=int).ravel()
    if sub.size != idx.size or idx.size > n:
        raise DomainError("support and sub-vector sizes disagree or exceed n")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DomainError("support index out of range")
    out = np.zeros(n)
    out[idx] = sub
    return out

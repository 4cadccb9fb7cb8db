"""Estimators for ``S`` from ``S_tilde = X + S``.

All spectral quantities use ``mu_i = sigma_i(S_tilde)**2``, the eigenvalues of
``S_tilde S_tilde^T``. An eigenvalue counts as an outlier when it exceeds
``sigma**2 * (lambda_+ + N**(-2/3))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import spectral
from .errors import DegenerateError, DomainError
from .linalg import SvdFactorization, embed_by_support, full_svd, normalize_signs, two_means_1d

Sigma = Union[float, str]


@dataclass
class OutlierDiagnostics:
    q: int
    mu: np.ndarray
    threshold: float
    sigma_hat: Optional[float]

    @property
    def k_plus_hat(self) -> int:
        return self.q - 1

    @property
    def K(self) -> int:
        return self.mu.size


def outlier_threshold(c: float, N: int, sigma: float = 1.0) -> float:
    return sigma ** 2 * (spectral.edges(c).lambda_plus + N ** (-2.0 / 3.0))


def detect_q(svd: SvdFactorization, c: float, N: int, sigma: float = 1.0) -> OutlierDiagnostics:
    """Find ``q``, the 1-based index of the first eigenvalue at or below the outlier gate.

    ``q = K + 1`` when every eigenvalue is above the gate.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    mu = np.asarray(svd.singular_values, dtype=float) ** 2
    if mu.size == 0:
        raise DomainError("empty spectrum")
    thr = outlier_threshold(c, N, sigma)
    below = np.flatnonzero(mu <= thr)
    q = int(below[0]) + 1 if below.size else mu.size + 1
    lam_plus = spectral.edges(c).lambda_plus
    sigma_hat = math.sqrt(mu[q - 1] / lam_plus) if q <= mu.size else None
    return OutlierDiagnostics(q=q, mu=mu, threshold=thr, sigma_hat=sigma_hat)


def estimate_noise(diag: OutlierDiagnostics, c: float) -> float:
    """Noise level from the first non-outlier: ``sqrt(mu_q / lambda_+)``."""
    if diag.q > diag.K:
        raise DegenerateError("no non-outlier eigenvalue observed; noise level unavailable")
    return math.sqrt(diag.mu[diag.q - 1] / spectral.edges(c).lambda_plus)


def shrink_singular_value(mu_i: float, c: float, N: int, sigma: float = 1.0) -> float:
    """Signal strength estimate for eigenvalue ``mu_i``; zero at or below the outlier gate."""
    if mu_i < 0:
        raise DomainError("mu_i must be nonnegative")
    if mu_i <= outlier_threshold(c, N, sigma):
        return 0.0
    return sigma * spectral.p_inverse(mu_i / sigma ** 2, c)


def bulk_sigma(svd: SvdFactorization, c: float) -> float:
    """Noise level from the median eigenvalue matched to the MP median."""
    mu = svd.mu
    return math.sqrt(float(np.median(mu)) / spectral.mp_median(c))


def resolve_sigma(S_tilde: np.ndarray, sigma: Sigma, svd: Optional[SvdFactorization] = None) -> float:
    """Turn ``sigma`` into a number; ``"auto"`` seeds from the bulk median then applies ``estimate_noise`` once."""
    if isinstance(sigma, str):
        if sigma != "auto":
            raise DomainError(f"sigma must be positive or 'auto', got {sigma!r}")
        M, N = S_tilde.shape
        c = N / M
        svd = svd if svd is not None else full_svd(S_tilde)
        if svd.singular_values[0] == 0:
            raise DegenerateError("zero matrix; noise level cannot be estimated")
        seed = bulk_sigma(svd, c)
        diag = detect_q(svd, c, N, seed)
        return estimate_noise(diag, c) if diag.q <= diag.K else seed
    sigma = float(sigma)
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be positive, got {sigma}")
    return sigma


# ---------------------------------------------------------------------------
# Stepwise SVD


@dataclass
class SupportChoice:
    indices: np.ndarray
    method: str  # "kmeans" or "fixed"
    separation_score: float
    threshold: float


def select_support(vec: np.ndarray, tau_sep: float = 3.0, delta1: float = 0.25) -> SupportChoice:
    """Indices of the large entries of ``|vec|``.

    Exact 2-means picks the upper cluster; if its smallest magnitude is below
    ``tau_sep / sqrt(n)`` the split is not trusted and the fixed threshold
    ``n**(-1/2 + delta1)`` is used instead.
    """
    a = np.abs(np.asarray(vec, dtype=float))
    n = a.size
    try:
        split = two_means_1d(a)
    except DegenerateError:
        split = None
    if split is not None and split.separation_score >= tau_sep:
        return SupportChoice(split.upper_indices, "kmeans", split.separation_score, split.threshold)
    alpha = n ** (-0.5 + delta1)
    score = split.separation_score if split is not None else 0.0
    return SupportChoice(np.flatnonzero(a >= alpha), "fixed", score, alpha)


@dataclass
class StepRecord:
    step: int
    t1: float
    d_hat: float
    left: SupportChoice
    right: SupportChoice
    skipped: bool = False
    reason: str = ""


@dataclass
class SparseDenoiseResult:
    d_hat: np.ndarray
    u_hat: np.ndarray  # M x k
    v_hat: np.ndarray  # N x k
    left_supports: list
    right_supports: list
    S_hat: np.ndarray
    residual: np.ndarray
    sigma: float
    initial: OutlierDiagnostics
    steps: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.d_hat.size


def stepwise_svd(
    S_tilde,
    sigma: Sigma = 1.0,
    delta1: float = 0.25,
    tau_sep: float = 3.0,
    gate: str = "fixed",
    max_components: Optional[int] = None,
) -> SparseDenoiseResult:
    """Sparse rank-by-rank estimate of ``S``.

    Each step shrinks the top singular value of the current residual, picks
    row/column supports from its singular vectors, takes the top singular pair
    of the residual restricted to those supports, and deflates.

    Parameters
    ----------
    S_tilde : array (M, N)
        Observation.
    sigma : float or "auto"
        Noise level of the entries of ``sqrt(N) * X``.
    delta1, tau_sep : float
        Fallback threshold exponent and separation guard for support selection.
    gate : {"recheck", "fixed"}
        ``"fixed"`` runs at most ``q - 1`` steps, ``q`` taken from
        ``S_tilde``, stopping early if the residual's top eigenvalue falls to
        the outlier gate. ``"recheck"`` drops the ``q - 1`` bound and runs while
        the gate passes (at most ``min(M, N)`` steps).
    max_components : int, optional
        Hard cap on the number of steps.
    """
    A = np.asarray(S_tilde, dtype=float)
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise DomainError("S_tilde must be a finite 2-D matrix")
    if gate not in ("recheck", "fixed"):
        raise DomainError(f"unknown gate mode {gate!r}")
    M, N = A.shape
    c = N / M
    svd = full_svd(A)
    sig = resolve_sigma(A, sigma, svd)
    initial = detect_q(svd, c, N, sig)
    limit = min(M, N) if max_components is None else min(int(max_components), min(M, N))
    if gate == "fixed":
        limit = min(limit, initial.q - 1)

    R = A.copy()
    d_list, us, vs, lsup, rsup, steps = [], [], [], [], [], []
    j = 0
    while j < limit:
        j += 1
        t1 = float(svd.singular_values[0])
        d_hat = shrink_singular_value(t1 * t1, c, N, sig)
        if d_hat == 0.0:
            if gate == "fixed":
                steps.append(StepRecord(j, t1, 0.0, None, None, True, "below_gate"))
            break
        left = select_support(svd.left_vectors[:, 0], tau_sep, delta1)
        right = select_support(svd.right_vectors[:, 0], tau_sep, delta1)
        if left.indices.size == 0 or right.indices.size == 0:
            # the residual would not change, so later steps would repeat this one
            steps.append(StepRecord(j, t1, d_hat, left, right, True, "empty_support"))
            break
        block = full_svd(R[np.ix_(left.indices, right.indices)])
        u = embed_by_support(block.left_vectors[:, 0], left.indices, M)
        v = embed_by_support(block.right_vectors[:, 0], right.indices, N)
        u, v = (w[:, 0] for w in normalize_signs(u[:, None], v[:, None]))
        R = R - d_hat * np.outer(u, v)
        d_list.append(d_hat)
        us.append(u)
        vs.append(v)
        lsup.append(left.indices)
        rsup.append(right.indices)
        steps.append(StepRecord(j, t1, d_hat, left, right))
        svd = full_svd(R)

    d_arr = np.asarray(d_list, dtype=float)
    U = np.column_stack(us) if us else np.zeros((M, 0))
    V = np.column_stack(vs) if vs else np.zeros((N, 0))
    S_hat = (U * d_arr) @ V.T
    return SparseDenoiseResult(d_arr, U, V, lsup, rsup, S_hat, R, sig, initial, steps)


# ---------------------------------------------------------------------------
# Rotation invariant estimator


@dataclass
class RieResult:
    eta_hat: np.ndarray
    d_hat: np.ndarray
    S_hat: np.ndarray
    svd: SvdFactorization
    diagnostics: OutlierDiagnostics
    sigma: float

    @property
    def q(self) -> int:
        return self.diagnostics.q


def rie_denoise(S_tilde, sigma: Sigma = 1.0) -> RieResult:
    """Keep the observed singular vectors and replace each outlier singular value
    by ``d_hat * a1(d_hat) * a2(d_hat)``; every non-outlier is set to zero.
    """
    A = np.asarray(S_tilde, dtype=float)
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise DomainError("S_tilde must be a finite 2-D matrix")
    M, N = A.shape
    c = N / M
    sig = resolve_sigma(A, sigma)
    svd = full_svd(A / sig)
    diag = detect_q(svd, c, N, 1.0)
    k = diag.q - 1
    d_hat = np.zeros(svd.K)
    eta = np.zeros(svd.K)
    if k > 0:
        d_hat[:k] = spectral.p_inverse(diag.mu[:k], c)
        eta[:k] = d_hat[:k] * spectral.a1(d_hat[:k], c) * spectral.a2(d_hat[:k], c)
    d_hat *= sig
    eta *= sig
    S_hat = (svd.left_vectors[:, :k] * eta[:k]) @ svd.right_vectors[:, :k].T
    return RieResult(eta, d_hat, S_hat, svd, diag, sig)


def oracle_eta(S_true, svd: SvdFactorization) -> np.ndarray:
    """Loss-optimal singular values ``<u_k, S v_k>`` for the observed singular vectors. Needs the truth."""
    S = np.asarray(S_true, dtype=float)
    U, V = svd.left_vectors, svd.right_vectors
    if S.shape != (U.shape[0], V.shape[0]):
        raise DomainError(f"S has shape {S.shape}, singular vectors imply {(U.shape[0], V.shape[0])}")
    return np.einsum("ik,ij,jk->k", U, S, V)


def tsvd_denoise(S_tilde, mode: str = "rank", value: float = 1) -> np.ndarray:
    """Truncated-SVD baselines.

    ``mode="rank"`` keeps the top ``value`` triples, ``"hard"`` keeps singular
    values ``>= value``, ``"soft"`` shrinks every singular value by ``value``.
    """
    A = np.asarray(S_tilde, dtype=float)
    svd = full_svd(A)
    s = svd.singular_values.copy()
    if mode == "rank":
        m = int(value)
        if m != value or m < 0 or m > svd.K:
            raise DomainError(f"rank must be an integer in [0, {svd.K}], got {value}")
        if m == svd.K:
            return A.copy()
        s[m:] = 0.0
    elif mode == "hard":
        s = np.where(s >= value, s, 0.0)
    elif mode == "soft":
        if value < 0:
            raise DomainError("soft threshold must be nonnegative")
        s = np.maximum(s - value, 0.0)
    else:
        raise DomainError(f"unknown tsvd mode {mode!r}")
    keep = s > 0
    return (svd.left_vectors[:, keep] * s[keep]) @ svd.right_vectors[:, keep].T

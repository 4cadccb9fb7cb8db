"""Synthetic instances of ``S_tilde = X + U D V^T`` with reproducible randomness."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError

ENTRY_LAWS = ("gaussian", "rademacher", "exponential")
NOISE_LAWS = ("gaussian", "rademacher", "uniform")
VECTOR_FAMILIES = ("dense_orthonormal", "sparse")


def _key(trial):
    return tuple(int(t) for t in trial) if isinstance(trial, (tuple, list)) else (int(trial),)


def rng_stream(seed: int, trial=0) -> np.random.Generator:
    """Independent generator for ``(seed, trial)``.

    The stream is keyed on the pair rather than drawn sequentially, so trial
    ``k`` gets the same numbers no matter which trials ran before it.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=_key(trial))
    return np.random.default_rng(ss)


def _draw_entries(rng, size, law):
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    if law == "exponential":
        return rng.exponential(1.0, size)
    raise DomainError(f"unknown entry law {law!r}; expected one of {ENTRY_LAWS}")


def gen_sparse_vector(n: int, k: int, rng: np.random.Generator, entry_law: str = "gaussian") -> np.ndarray:
    """Unit vector of length ``n`` with exactly ``k`` nonzero entries on a uniform random support."""
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    support = rng.choice(n, size=k, replace=False)
    vals = _draw_entries(rng, k, entry_law)
    while np.any(vals == 0) or np.linalg.norm(vals) == 0:
        vals = _draw_entries(rng, k, entry_law)
    out = np.zeros(n)
    out[support] = vals / np.linalg.norm(vals)
    return out


def _disjoint_supports(n, sizes, rng):
    if sum(sizes) > n:
        raise DomainError(f"disjoint supports of sizes {list(sizes)} do not fit in length {n}")
    perm = rng.permutation(n)
    out, start = [], 0
    for k in sizes:
        out.append(np.sort(perm[start:start + k]))
        start += k
    return out


def gen_orthonormal_set(
    n: int,
    r: int,
    rng: np.random.Generator,
    sparse_supports: Optional[Sequence[Sequence[int]]] = None,
    entry_law: str = "gaussian",
) -> np.ndarray:
    """``n x r`` matrix with orthonormal columns.

    Without ``sparse_supports`` the columns are dense (QR of an i.i.d. draw,
    or the normalized draw itself when ``r == 1``). With supports, column ``j``
    is drawn on ``sparse_supports[j]``; overlapping supports are orthogonalized
    by sequential projection, which can only grow a support to the union.
    """
    if r < 1 or r > n:
        raise DomainError(f"need 1 <= r <= n, got r={r}, n={n}")
    if sparse_supports is None:
        A = _draw_entries(rng, (n, r), entry_law)
        if r == 1:
            return A / np.linalg.norm(A)
        Q, R = np.linalg.qr(A)
        return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    if len(sparse_supports) != r:
        raise DomainError("need one support per column")
    cols = np.zeros((n, r))
    for j, supp in enumerate(sparse_supports):
        supp = np.asarray(supp, dtype=int)
        if supp.size == 0 or supp.min() < 0 or supp.max() >= n:
            raise DomainError(f"support {j} is empty or out of range")
        for _ in range(100):
            col = np.zeros(n)
            col[supp] = _draw_entries(rng, supp.size, entry_law)
            for i in range(j):
                if np.any(cols[supp, i] != 0):
                    col -= (cols[:, i] @ col) * cols[:, i]
            nrm = np.linalg.norm(col)
            if nrm > 1e-8:
                break
        else:
            raise DomainError(f"could not orthogonalize column {j}; support too small")
        cols[:, j] = col / nrm
    return cols


@dataclass(frozen=True)
class SignalSpec:
    M: int
    N: int
    d_values: tuple
    vector_family: str = "dense_orthonormal"
    # nonzeros per vector; used when vector_family == "sparse"
    k_left: Optional[int] = None
    k_right: Optional[int] = None
    disjoint_supports: bool = True
    entry_law: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(float(d) for d in self.d_values))
        errs = []
        if not (isinstance(self.M, numbers.Integral) and self.M > 0):
            errs.append("M")
        if not (isinstance(self.N, numbers.Integral) and self.N > 0):
            errs.append("N")
        d = self.d_values
        r = len(d)
        if r == 0 or any(not math.isfinite(x) or x <= 0 for x in d) or any(a <= b for a, b in zip(d, d[1:])):
            errs.append("d_values")
        elif not errs and r > min(self.M, self.N):
            errs.append("d_values")
        if self.vector_family not in VECTOR_FAMILIES:
            errs.append("vector_family")
        if self.entry_law not in ENTRY_LAWS:
            errs.append("entry_law")
        if self.vector_family == "sparse" and not errs:
            if self.k_left is None or not 1 <= self.k_left <= self.M:
                errs.append("k_left")
            if self.k_right is None or not 1 <= self.k_right <= self.N:
                errs.append("k_right")
        if errs:
            raise ConfigError(f"invalid signal spec fields: {', '.join(errs)}", errs)

    @property
    def r(self) -> int:
        return len(self.d_values)

    @property
    def c(self) -> float:
        return self.N / self.M


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        errs = []
        if self.distribution not in NOISE_LAWS:
            errs.append("distribution")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            errs.append("sigma")
        if errs:
            raise ConfigError(f"invalid noise spec fields: {', '.join(errs)}", errs)


def gen_noise(M: int, N: int, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """``M x N`` matrix of i.i.d. ``sigma * q / sqrt(N)`` with ``q`` of mean 0, variance 1."""
    if spec.distribution == "gaussian":
        q = rng.standard_normal((M, N))
    elif spec.distribution == "rademacher":
        q = rng.choice(np.array([-1.0, 1.0]), size=(M, N))
    else:
        q = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(M, N))
    return q * (spec.sigma / math.sqrt(N))


@dataclass
class SyntheticInstance:
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray
    X: np.ndarray
    S_tilde: np.ndarray
    left_supports: list = field(default_factory=list)
    right_supports: list = field(default_factory=list)
    sigma: float = 1.0

    @property
    def S(self) -> np.ndarray:
        return (self.U * self.D) @ self.V.T

    @property
    def shape(self):
        return self.S_tilde.shape


def _supports_of(cols):
    return [np.flatnonzero(cols[:, j]) for j in range(cols.shape[1])]


def _side(n, k, spec, rng):
    r = spec.r
    if spec.vector_family == "dense_orthonormal":
        return gen_orthonormal_set(n, r, rng, entry_law=spec.entry_law)
    if spec.disjoint_supports:
        supports = _disjoint_supports(n, [k] * r, rng)
    else:
        supports = [np.sort(rng.choice(n, size=k, replace=False)) for _ in range(r)]
    return gen_orthonormal_set(n, r, rng, sparse_supports=supports, entry_law=spec.entry_law)


def assemble(signal: SignalSpec, noise: NoiseSpec, trial=0) -> SyntheticInstance:
    """Draw ``(U, D, V, X)`` for one trial and form the observation.

    ``trial`` is an int or a tuple of ints (e.g. ``(sweep_point, trial)``).
    Left vectors, right vectors and noise come from three child streams of
    the ``(seed, trial)`` stream.
    """
    base = np.random.SeedSequence(int(signal.seed) & (2**64 - 1), spawn_key=_key(trial))
    s_u, s_v, s_x = (np.random.default_rng(s) for s in base.spawn(3))
    U = _side(signal.M, signal.k_left, signal, s_u)
    V = _side(signal.N, signal.k_right, signal, s_v)
    D = np.asarray(signal.d_values, dtype=float)
    X = gen_noise(signal.M, signal.N, noise, s_x)
    S_tilde = X + (U * D) @ V.T
    return SyntheticInstance(
        U=U, D=D, V=V, X=X, S_tilde=S_tilde,
        left_supports=_supports_of(U), right_supports=_supports_of(V),
        sigma=float(noise.sigma),
    )

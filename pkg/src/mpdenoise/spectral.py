"""Deterministic Marchenko-Pastur quantities for the additive low-rank model.

Conventions: the noise ``X`` is ``M x N`` with entry variance ``1/N`` and the
aspect ratio is ``c = N / M``. ``XX*`` then has spectral edges
``(1 +- c**-0.5)**2``. Index 1 quantities refer to ``XX*`` (size ``M``), index 2
to ``X*X`` (size ``N``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import DomainError

__all__ = [
    "AspectRatio",
    "SpectralEdges",
    "aspect_ratio",
    "edges",
    "critical_strength",
    "mp_density_1",
    "mp_density_2",
    "m1c",
    "m2c",
    "t_real",
    "t_product",
    "p_of_d",
    "p_inverse",
    "a1",
    "a2",
    "mp_median",
]


@dataclass(frozen=True)
class AspectRatio:
    c: float

    def __post_init__(self):
        _check_c(self.c)

    @classmethod
    def from_shape(cls, M: int, N: int) -> "AspectRatio":
        if M <= 0 or N <= 0:
            raise DomainError(f"dimensions must be positive, got M={M}, N={N}")
        return cls(N / M)

    def __float__(self):
        return float(self.c)


@dataclass(frozen=True)
class SpectralEdges:
    lambda_minus: float
    lambda_plus: float


def _check_c(c) -> float:
    c = float(c)
    if not math.isfinite(c) or c <= 0:
        raise DomainError(f"aspect ratio must be positive and finite, got {c!r}")
    return c


def aspect_ratio(M: int, N: int) -> float:
    return AspectRatio.from_shape(M, N).c


def edges(c) -> SpectralEdges:
    """Return the support ``[lambda_-, lambda_+]`` of the MP law for ratio ``c``."""
    c = _check_c(c)
    s = c ** -0.5
    return SpectralEdges((1.0 - s) ** 2, (1.0 + s) ** 2)


def critical_strength(c) -> float:
    """Signal strength ``c**-0.25`` at which a spike starts to separate from the bulk."""
    return _check_c(c) ** -0.25


def _scalar_or_array(values):
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


def _density(x, c, prefactor):
    e = edges(c)
    x = np.asarray(x, dtype=float)
    inside = (x > e.lambda_minus) & (x < e.lambda_plus) & (x > 0)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = prefactor * np.sqrt((e.lambda_plus - xi) * (xi - e.lambda_minus)) / xi
    return _scalar_or_array(out)


def mp_density_1(x, c):
    """Continuous part of the limiting spectral density of ``XX*``.

    Integrates to ``min(1, c)``; when ``c < 1`` the rest is an atom at zero.
    """
    c = _check_c(c)
    return _density(x, c, c / (2 * math.pi))


def mp_density_2(x, c):
    """Continuous part of the limiting spectral density of ``X*X``; mass ``min(1, 1/c)``."""
    c = _check_c(c)
    return _density(x, c, 1 / (2 * math.pi))


def _check_upper(z) -> complex:
    z = complex(z)
    if not (z.imag > 0) or not math.isfinite(z.real) or not math.isfinite(z.imag):
        raise DomainError(f"spectral parameter must lie in the open upper half plane, got {z!r}")
    return z


def _edge_root(z: complex, c: float) -> complex:
    e = edges(c)
    # principal branch; the product never lands on the negative real axis for Im z > 0
    return 1j * np.sqrt((e.lambda_plus - z) * (z - e.lambda_minus))


def m1c(z, c) -> complex:
    """Stieltjes transform of the limiting spectral distribution of ``XX*``."""
    c = _check_c(c)
    z = _check_upper(z)
    ci = 1.0 / c
    return complex((1 - ci - z + _edge_root(z, c)) / (2 * z * ci))


def m2c(z, c) -> complex:
    """Stieltjes transform of the limiting spectral distribution of ``X*X``."""
    c = _check_c(c)
    z = _check_upper(z)
    ci = 1.0 / c
    return complex((ci - 1 - z + _edge_root(z, c)) / (2 * z))


def t_real(x, c):
    """Master function ``x * m1c(x) * m2c(x)`` on the real axis right of the bulk.

    Strictly decreasing on ``(lambda_+, inf)`` from ``sqrt(c)`` down to 0.
    Accepts scalars or arrays.
    """
    c = _check_c(c)
    lam_plus = edges(c).lambda_plus
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= lam_plus):
        raise DomainError(f"t_real needs x > lambda_+ = {lam_plus}")
    ci = 1.0 / c
    disc = (x + ci - 1) ** 2 - 4 * ci * x
    root = np.sqrt(np.maximum(disc, 0.0))
    # x - (1+ci) - root suffers cancellation for large x; use the conjugate form
    num = 4 * ci / (x - (1 + ci) + root)
    return _scalar_or_array(num / (2 * ci))


def t_product(x, d_list: Sequence[float], c):
    """Product over spikes of ``t_real(x) - d_i**-2``; vanishes at each outlier location."""
    d = np.asarray(d_list, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise DomainError("d_list must be a non-empty sequence")
    if np.any(d <= 0):
        raise DomainError("spike strengths must be positive")
    t = np.asarray(t_real(x, c))
    out = np.prod(t[..., None] - d ** -2.0, axis=-1)
    return _scalar_or_array(out)


def p_of_d(d, c):
    """Limit location ``(d^2+1)(d^2+1/c)/d^2`` of the outlier eigenvalue created by strength ``d``."""
    c = _check_c(c)
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("p_of_d needs d > 0")
    d2 = d * d
    return _scalar_or_array((d2 + 1) * (d2 + 1 / c) / d2)


def p_inverse(mu, c):
    """Invert ``p_of_d`` on its increasing branch ``d >= c**-0.25``.

    Solves ``t^2 + (1 + 1/c - mu) t + 1/c = 0`` for ``t = d^2`` and keeps the
    larger root.
    """
    c = _check_c(c)
    lam_plus = edges(c).lambda_plus
    mu = np.asarray(mu, dtype=float)
    if np.any(~np.isfinite(mu)) or np.any(mu < lam_plus * (1 - 1e-12)):
        raise DomainError(f"p_inverse needs mu >= lambda_+ = {lam_plus}")
    ci = 1.0 / c
    b = mu - 1 - ci
    disc = np.maximum(b * b - 4 * ci, 0.0)
    t = (b + np.sqrt(disc)) / 2
    return _scalar_or_array(np.sqrt(t))


def _overlap(d, c, which):
    c = _check_c(c)
    d = np.asarray(d, dtype=float)
    dc = c ** -0.25
    if np.any(~np.isfinite(d)) or np.any(d < dc):
        raise DomainError(f"overlap limits need d >= c**-0.25 = {dc}")
    d2 = d * d
    ci = 1.0 / c
    num = np.maximum(d2 * d2 - ci, 0.0)
    den = d2 * (d2 + (ci if which == 1 else 1.0))
    return _scalar_or_array(num / den)


def a1(d, c):
    """Limit of the squared overlap between a left signal vector and its observed counterpart."""
    return _overlap(d, c, 1)


def a2(d, c):
    """Limit of the squared overlap between a right signal vector and its observed counterpart."""
    return _overlap(d, c, 2)


def mp_median(c) -> float:
    """Median of the nonzero part of the limiting spectrum of ``XX*``.

    For ``c >= 1`` this is the median of ``XX*``'s law; for ``c < 1`` the
    nonzero eigenvalues follow ``X*X``'s law instead. Used to seed a noise-level
    estimate from the bulk, which finitely many spikes cannot move.
    """
    c = _check_c(c)
    e = edges(c)
    dens = mp_density_1 if c >= 1 else mp_density_2

    def cdf(x):
        return quad(lambda t: dens(t, c), e.lambda_minus, x, limit=200)[0] - 0.5

    return float(brentq(cdf, e.lambda_minus, e.lambda_plus, xtol=1e-13))

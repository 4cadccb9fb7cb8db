import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import bisect

from mpdenoise import spectral
from mpdenoise.errors import DomainError

C_GRID = [0.5, 1.0, 2.0, 4.0]


def self_consistent_1(z, c):
    m = spectral.m1c(z, c)
    return m + 1 / (z - (1 - 1 / c) + z * m / c)


def self_consistent_2(z, c):
    m = spectral.m2c(z, c)
    return m + 1 / (z + (1 - 1 / c) + z * m)


def stieltjes_quad(density, z, c):
    """Integral of density(x) / (x - z) over the support, by quadrature with the sqrt endpoint weight."""
    e = spectral.edges(c)
    lo, hi = e.lambda_minus, e.lambda_plus
    # density(x) = pref * sqrt((hi-x)(x-lo)) / x, so integrate pref / (x (x-z)) against the algebraic weight
    pref = density((lo + hi) / 2, c) * ((lo + hi) / 2) / math.sqrt((hi - (lo + hi) / 2) * ((lo + hi) / 2 - lo))

    def re(x):
        return (pref / (x * (x - z))).real

    def im(x):
        return (pref / (x * (x - z))).imag

    kw = dict(weight="alg", wvar=(0.5, 0.5), limit=200, epsabs=1e-12, epsrel=1e-12)
    return complex(quad(re, lo, hi, **kw)[0], quad(im, lo, hi, **kw)[0])


# ---------------------------------------------------------------------------
# edges and the AspectRatio type


def test_edges_square_case():
    e = spectral.edges(1.0)
    assert e.lambda_minus == 0.0
    assert e.lambda_plus == 4.0


def test_edges_c2_value():
    # (1 + 2^{-1/2})^2 = 1.5 + sqrt(2)
    assert spectral.edges(2.0).lambda_plus == pytest.approx(1.5 + math.sqrt(2.0), abs=1e-15)
    assert spectral.edges(2.0).lambda_plus == pytest.approx(2.9142135623730950488, abs=1e-14)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 4.0])
def test_edge_is_p_at_critical(c):
    assert abs(spectral.p_of_d(c ** -0.25, c) - spectral.edges(c).lambda_plus) < 1e-12


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_edges_rejects_bad_c(bad):
    with pytest.raises(DomainError):
        spectral.edges(bad)


def test_aspect_ratio_from_shape():
    assert spectral.AspectRatio.from_shape(300, 600).c == 2.0
    assert spectral.AspectRatio.from_shape(3, 7).c == 7 / 3
    with pytest.raises(DomainError):
        spectral.AspectRatio(-2.0)


# ---------------------------------------------------------------------------
# densities


def test_density_1_examples():
    assert spectral.mp_density_1(5.0, 1.0) == 0.0
    assert spectral.mp_density_1(2.0, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    assert spectral.mp_density_1(0.0, 1.0) == 0.0


def test_density_2_examples():
    assert spectral.mp_density_2(2.0, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    e = spectral.edges(2.0)
    assert spectral.mp_density_2(e.lambda_minus / 2, 2.0) == 0.0


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 4.0])
def test_density_masses(c):
    e = spectral.edges(c)
    m1 = quad(lambda x: spectral.mp_density_1(x, c), e.lambda_minus, e.lambda_plus, limit=200)[0]
    m2 = quad(lambda x: spectral.mp_density_2(x, c), e.lambda_minus, e.lambda_plus, limit=200)[0]
    assert abs(m1 - min(1.0, c)) < 1e-6
    assert abs(m2 - min(1.0, 1 / c)) < 1e-6
    # continuous mass plus the atom at zero is one
    assert abs(m1 + max(0.0, 1 - c) - 1) < 1e-6
    assert abs(m2 + max(0.0, 1 - 1 / c) - 1) < 1e-6


@given(x=st.floats(-5, 40, allow_nan=False), c=st.sampled_from(C_GRID))
def test_densities_nonnegative_and_supported(x, c):
    e = spectral.edges(c)
    for f in (spectral.mp_density_1, spectral.mp_density_2):
        v = f(x, c)
        assert v >= 0
        if x < e.lambda_minus or x > e.lambda_plus:
            assert v == 0


def test_density_vectorized():
    xs = np.linspace(0, 5, 11)
    v = spectral.mp_density_1(xs, 2.0)
    assert v.shape == xs.shape
    np.testing.assert_allclose(v, [spectral.mp_density_1(float(x), 2.0) for x in xs], rtol=0, atol=0)


# ---------------------------------------------------------------------------
# Stieltjes transforms


def test_self_consistent_m1c():
    assert abs(self_consistent_1(3 + 0.1j, 2.0)) < 1e-12


def test_self_consistent_m2c():
    assert abs(self_consistent_2(4 + 0.2j, 0.5)) < 1e-12


def test_m1c_m2c_linear_relation():
    for c in C_GRID:
        for z in (3 + 0.1j, 0.5 + 2j, -1 + 0.01j, 10 + 1e-3j):
            lhs = spectral.m1c(z, c)
            rhs = (c - 1) / z + c * spectral.m2c(z, c)
            assert abs(lhs - rhs) < 1e-12 * max(1, abs(lhs))


@pytest.mark.parametrize("c", [0.5, 2.0, 4.0])
def test_m1c_quadrature_oracle(c):
    z = 2 + 0.5j
    atom = max(0.0, 1 - c) * (-1 / z)
    assert abs(spectral.m1c(z, c) - stieltjes_quad(spectral.mp_density_1, z, c) - atom) < 1e-6


@pytest.mark.parametrize("c", [0.5, 2.0, 4.0])
def test_m2c_quadrature_oracle(c):
    z = 2 + 0.5j
    atom = max(0.0, 1 - 1 / c) * (-1 / z)
    assert abs(spectral.m2c(z, c) - stieltjes_quad(spectral.mp_density_2, z, c) - atom) < 1e-6


def test_transforms_positive_imaginary_part_on_grid():
    rng = np.random.default_rng(5)
    E = rng.uniform(-5, 15, 100)
    eta = 10 ** rng.uniform(-4, 1, 100)
    for c in C_GRID:
        for e, h in zip(E, eta):
            z = complex(e, h)
            assert spectral.m1c(z, c).imag > 0
            assert spectral.m2c(z, c).imag > 0


@settings(max_examples=200)
@given(
    E=st.floats(-10, 30),
    eta=st.floats(1e-3, 10),
    c=st.sampled_from(C_GRID),
)
def test_self_consistent_property(E, eta, c):
    z = complex(E, eta)
    assert abs(self_consistent_1(z, c)) < 1e-10
    assert abs(self_consistent_2(z, c)) < 1e-10


def test_transforms_reject_real_axis():
    with pytest.raises(DomainError):
        spectral.m1c(3.0, 2.0)
    with pytest.raises(DomainError):
        spectral.m2c(3 - 0.1j, 2.0)


# ---------------------------------------------------------------------------
# master function


def test_t_at_outlier_location():
    assert abs(spectral.t_real(spectral.p_of_d(3.0, 2.0), 2.0) - 1 / 9) < 1e-12


def test_t_decays_to_zero():
    assert 0 < spectral.t_real(1e6, 2.0) < 1e-5


@pytest.mark.parametrize("c", C_GRID)
def test_t_edge_limit(c):
    lp = spectral.edges(c).lambda_plus
    assert abs(spectral.t_real(lp + 1e-9, c) - math.sqrt(c)) < 1e-3


def test_t_equals_product_of_transforms_near_axis():
    # x m1c m2c evaluated just above the real axis
    c, x = 2.0, 6.0
    z = complex(x, 1e-9)
    val = z * spectral.m1c(z, c) * spectral.m2c(z, c)
    assert abs(val.real - spectral.t_real(x, c)) < 1e-6


def test_t_rejects_bulk():
    with pytest.raises(DomainError):
        spectral.t_real(2.0, 2.0)
    with pytest.raises(DomainError):
        spectral.t_real(spectral.edges(2.0).lambda_plus, 2.0)


@given(
    c=st.sampled_from(C_GRID),
    a=st.floats(1e-6, 100),
    b=st.floats(1e-6, 100),
)
def test_t_strictly_decreasing(c, a, b):
    lp = spectral.edges(c).lambda_plus
    x1, x2 = sorted((lp + a, lp + b))
    if x2 - x1 < 1e-9 * x2:
        return
    assert spectral.t_real(x1, c) > spectral.t_real(x2, c)


def test_t_product_zeros():
    c = 2.0
    ds = [4.5, 4.0, 3.5, 3.0]
    for d in ds:
        assert abs(spectral.t_product(spectral.p_of_d(d, c), ds, c)) < 1e-12


def test_t_product_four_sign_changes():
    c = 2.0
    ds = [4.5, 4.0, 3.5, 3.0]
    lp = spectral.edges(c).lambda_plus
    xs = np.linspace(lp + 1e-6, 30, 20001)
    vals = np.array([spectral.t_product(x, ds, c) for x in xs])
    assert np.count_nonzero(np.diff(np.sign(vals)) != 0) == 4


def test_t_product_alternates_between_roots():
    c = 2.0
    ds = [4.0, 3.0, 2.0]
    ps = [spectral.p_of_d(d, c) for d in ds]
    signs = [np.sign(spectral.t_product(0.5 * (ps[i] + ps[i + 1]), ds, c)) for i in range(len(ps) - 1)]
    assert signs[0] == -signs[1]


def test_t_product_needs_d():
    with pytest.raises(DomainError):
        spectral.t_product(10.0, [], 2.0)


# ---------------------------------------------------------------------------
# p, its inverse and the overlaps


def test_p_exact_values():
    assert spectral.p_of_d(4.0, 2.0) == pytest.approx(float(Fraction(17 * 33, 2 * 16)), abs=1e-13)
    assert spectral.p_of_d(4.0, 2.0) == pytest.approx(17.53125, abs=1e-13)
    assert spectral.p_of_d(3.0, 2.0) == pytest.approx(95 / 9, abs=1e-13)


def test_p_rejects_nonpositive():
    for bad in (0.0, -1.0):
        with pytest.raises(DomainError):
            spectral.p_of_d(bad, 2.0)


def test_p_inverse_examples():
    c = 2.0
    assert abs(spectral.p_inverse(spectral.edges(c).lambda_plus, c) - c ** -0.25) < 1e-7
    assert abs(spectral.p_inverse(95 / 9, c) - 3.0) < 1e-10
    with pytest.raises(DomainError):
        spectral.p_inverse(2.0, c)


@settings(max_examples=300)
@given(c=st.sampled_from(C_GRID), t=st.floats(1e-6, 1.0))
def test_p_roundtrip(c, t):
    dc = c ** -0.25
    d = dc + t * (10 - dc)
    assert abs(spectral.p_inverse(spectral.p_of_d(d, c), c) - d) < 1e-10 * max(1, d)


@pytest.mark.parametrize("c", C_GRID)
@pytest.mark.parametrize("d", [1.2, 2.0, 3.0, 5.0, 10.0])
def test_p_matches_bisection_root(c, d):
    if d <= c ** -0.25:
        pytest.skip("subcritical")
    lp = spectral.edges(c).lambda_plus
    root = bisect(lambda x: spectral.t_real(x, c) - d ** -2, lp * (1 + 1e-12), 10 * spectral.p_of_d(d, c),
                  xtol=1e-12, rtol=1e-15, maxiter=500)
    assert abs(root - spectral.p_of_d(d, c)) < 1e-8


@given(c=st.sampled_from(C_GRID), d1=st.floats(0.85, 10), d2=st.floats(0.85, 10))
def test_p_increasing_above_critical(c, d1, d2):
    dc = c ** -0.25
    lo, hi = sorted((d1, d2))
    if lo <= dc or hi - lo < 1e-9:
        return
    assert spectral.p_of_d(lo, c) < spectral.p_of_d(hi, c)


def test_overlap_exact_values():
    assert spectral.a1(3.0, 2.0) == pytest.approx(80.5 / 85.5, abs=1e-14)
    assert spectral.a2(3.0, 2.0) == pytest.approx(80.5 / 90, abs=1e-14)
    assert abs(4 * spectral.a1(4.0, 2.0) * spectral.a2(4.0, 2.0) - 4 * (255.5 / 264) * (255.5 / 272)) < 1e-13


@pytest.mark.parametrize("c", C_GRID)
def test_overlap_limits(c):
    dc = c ** -0.25
    assert abs(spectral.a1(dc, c)) < 1e-12
    assert abs(spectral.a2(dc, c)) < 1e-12
    assert spectral.a1(1e3, c) > 0.9999
    assert spectral.a2(1e3, c) > 0.9999
    with pytest.raises(DomainError):
        spectral.a1(0.9 * dc, c)
    with pytest.raises(DomainError):
        spectral.a2(0.9 * dc, c)


@pytest.mark.parametrize("c", C_GRID)
def test_overlaps_monotone(c):
    dc = c ** -0.25
    ds = np.linspace(dc, 10, 2000)
    for f in (spectral.a1, spectral.a2):
        v = f(ds, c)
        assert np.all(np.diff(v) >= -1e-12)
        assert np.all((v >= 0) & (v < 1))


def test_mp_median_splits_mass():
    for c in C_GRID:
        med = spectral.mp_median(c)
        dens = spectral.mp_density_1 if c >= 1 else spectral.mp_density_2
        e = spectral.edges(c)
        mass = quad(lambda x: dens(x, c), e.lambda_minus, med, limit=200)[0]
        assert abs(mass - 0.5) < 1e-8

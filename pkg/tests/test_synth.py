import numpy as np
import pytest

from mpdenoise import spectral
from mpdenoise.errors import ConfigError, DomainError
from mpdenoise.synth import (
    NoiseSpec,
    SignalSpec,
    assemble,
    gen_noise,
    gen_orthonormal_set,
    gen_sparse_vector,
    rng_stream,
)


def test_sparse_vector_full_support():
    v = gen_sparse_vector(10, 10, rng_stream(1))
    assert np.count_nonzero(v) == 10
    assert abs(np.linalg.norm(v) - 1) < 1e-14


def test_sparse_vector_contract():
    v = gen_sparse_vector(600, 30, rng_stream(2))
    assert abs(np.linalg.norm(v) - 1) < 1e-14
    assert np.count_nonzero(v) == 30
    # magnitudes of order 1/sqrt(k)
    assert np.median(np.abs(v[v != 0])) * np.sqrt(30) == pytest.approx(0.67, abs=0.4)


@pytest.mark.parametrize("k", [0, 11])
def test_sparse_vector_range(k):
    with pytest.raises(DomainError):
        gen_sparse_vector(10, k, rng_stream(0))


def test_sparsity_ratio_to_count():
    from mpdenoise.config import load_preset

    spec = load_preset("table1").signal_spec()
    assert spec.k_left == 15
    assert spec.k_right == 30


def test_orthonormal_r1():
    U = gen_orthonormal_set(5, 1, rng_stream(3))
    assert abs(np.linalg.norm(U) - 1) < 1e-14


def test_orthonormal_disjoint_exact_zero():
    rng = rng_stream(4)
    U = gen_orthonormal_set(20, 2, rng, sparse_supports=[[0, 3, 5], [1, 2, 7, 9]])
    assert U[:, 0] @ U[:, 1] == 0.0
    assert set(np.flatnonzero(U[:, 0])) == {0, 3, 5}


def test_orthonormal_dense_600():
    V = gen_orthonormal_set(600, 2, rng_stream(5))
    assert abs(V[:, 0] @ V[:, 1]) < 1e-12
    np.testing.assert_allclose(V.T @ V, np.eye(2), atol=1e-12)


def test_orthonormal_overlapping_supports():
    U = gen_orthonormal_set(30, 3, rng_stream(6), sparse_supports=[range(0, 10), range(5, 15), range(8, 20)])
    np.testing.assert_allclose(U.T @ U, np.eye(3), atol=1e-12)
    # projection can only grow a support to the union of earlier ones
    assert set(np.flatnonzero(U[:, 1])) <= set(range(0, 15))


def test_orthonormal_rank_too_big():
    with pytest.raises(DomainError):
        gen_orthonormal_set(3, 4, rng_stream(0))


def test_noise_zero_sigma():
    X = gen_noise(4, 6, NoiseSpec("gaussian", 0.0), rng_stream(0))
    assert np.array_equal(X, np.zeros((4, 6)))


@pytest.mark.parametrize("law", ["gaussian", "rademacher", "uniform"])
def test_noise_variance(law):
    X = gen_noise(500, 500, NoiseSpec(law, 1.0), rng_stream(7))
    v = np.var(X * np.sqrt(500))
    assert 0.99 <= v <= 1.01
    assert abs(np.mean(X * np.sqrt(500))) < 0.01


def test_pure_noise_edge_and_histogram():
    X = gen_noise(500, 1000, NoiseSpec(), rng_stream(8))
    ev = np.linalg.eigvalsh(X @ X.T)
    c = 2.0
    e = spectral.edges(c)
    assert abs(ev[-1] - e.lambda_plus) < 0.1
    bins = np.linspace(e.lambda_minus, e.lambda_plus, 21)
    hist, _ = np.histogram(np.clip(ev, bins[0], bins[-1]), bins=bins)
    emp = hist / hist.sum()
    from scipy.integrate import quad

    theo = np.array([quad(lambda x: spectral.mp_density_1(x, c), a, b)[0] for a, b in zip(bins[:-1], bins[1:])])
    assert 0.5 * np.abs(emp - theo).sum() < 0.1


def test_assemble_noiseless_is_signal():
    sig = SignalSpec(20, 30, (3.0, 1.0), seed=9)
    inst = assemble(sig, NoiseSpec(sigma=0.0))
    assert np.array_equal(inst.S_tilde, inst.S)


def test_assemble_fig1_configuration():
    sig = SignalSpec(100, 200, (4, 3, 2.5, 1.5, 0.1), seed=10)
    inst = assemble(sig, NoiseSpec())
    assert inst.shape == (100, 200)
    np.testing.assert_allclose(inst.U.T @ inst.U, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(inst.V.T @ inst.V, np.eye(5), atol=1e-12)
    assert np.array_equal(inst.S_tilde, inst.X + (inst.U * inst.D) @ inst.V.T)


def test_assemble_table1_configuration():
    sig = SignalSpec(300, 600, (7, 4), vector_family="sparse", k_left=15, k_right=30, seed=11)
    inst = assemble(sig, NoiseSpec())
    assert [len(s) for s in inst.left_supports] == [15, 15]
    assert [len(s) for s in inst.right_supports] == [30, 30]
    assert not set(inst.left_supports[0]) & set(inst.left_supports[1])
    assert inst.U[:, 0] @ inst.U[:, 1] == 0.0
    np.testing.assert_allclose(inst.V.T @ inst.V, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("law", ["gaussian", "rademacher", "exponential"])
def test_assemble_reproducible(law):
    sig = SignalSpec(40, 60, (2.0,), entry_law=law, seed=12)
    a = assemble(sig, NoiseSpec(), trial=(3, 4))
    b = assemble(sig, NoiseSpec(), trial=(3, 4))
    for name in ("U", "V", "X", "S_tilde"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = assemble(sig, NoiseSpec(), trial=(3, 5))
    assert not np.array_equal(a.X, c.X)


def test_trial_streams_order_independent():
    a = [rng_stream(13, t).standard_normal(3) for t in range(5)]
    b = [rng_stream(13, t).standard_normal(3) for t in reversed(range(5))][::-1]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(M=3, N=4, d_values=(1, 2)), "d_values"),
        (dict(M=3, N=4, d_values=(3, 2, 1, 0.5)), "d_values"),
        (dict(M=0, N=4, d_values=(1,)), "M"),
        (dict(M=3, N=4, d_values=(1,), vector_family="sparse"), "k_left"),
        (dict(M=3, N=4, d_values=(1,), entry_law="cauchy"), "entry_law"),
    ],
)
def test_signal_spec_validation(kwargs, field):
    with pytest.raises(ConfigError) as exc:
        SignalSpec(**kwargs)
    assert field in exc.value.fields


def test_noise_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec("cauchy")
    with pytest.raises(ConfigError):
        NoiseSpec(sigma=-1.0)

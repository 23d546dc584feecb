import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfield.kernel import (GridSpec, ModelParams, ScalarContext, corr_matrix, covariance_entry,
                              log_variance_prefactor, matern32_corr, variance_prefactor)
from gridfield.oracle import dense_kron_covariance

thetas = st.floats(0.05, 20.0)


def test_corr_zero_lag_is_one():
    assert matern32_corr(0.0, 1.0) == 1.0


def test_corr_unit_lag():
    np.testing.assert_allclose(matern32_corr(1.0, 1.0), 2 * math.exp(-1), rtol=1e-15)
    np.testing.assert_allclose(matern32_corr(1.0, 1.0), 0.735759, atol=1e-6)


def test_corr_decays_monotonically_to_zero():
    s = np.linspace(0, 60, 400)
    c = matern32_corr(s, 1.0)
    assert np.all(np.diff(c) < 0)
    assert c[-1] < 1e-24


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_corr_rejects_bad_theta(bad):
    with pytest.raises(ValueError):
        matern32_corr(1.0, bad)


def test_corr_rejects_negative_distance():
    with pytest.raises(ValueError):
        matern32_corr(-0.1, 1.0)


@given(s=st.floats(0, 50), theta=thetas)
def test_corr_scale_equivariance(s, theta):
    np.testing.assert_allclose(matern32_corr(s, theta), matern32_corr(theta * s, 1.0), rtol=1e-12)


def test_prefactor_values():
    np.testing.assert_allclose(variance_prefactor(ModelParams(1.0, (2.0,))), math.pi / 16, rtol=1e-15)
    assert variance_prefactor(ModelParams(2 / math.pi, (1.0,))) == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(variance_prefactor(ModelParams(1.0, (1.0, 1.0, 1.0))),
                               (math.pi / 2) ** 3, rtol=1e-15)


def test_prefactor_overflow():
    with pytest.raises(OverflowError):
        variance_prefactor(ModelParams(1.0, (1e-90,) * 3))
    assert math.isfinite(log_variance_prefactor(ModelParams(1.0, (1e-90,) * 3)))


@pytest.mark.parametrize("phi, th", [(0.0, (1.0,)), (-1.0, (1.0,)), (1.0, ()), (1.0, (0.0,)),
                                     (1.0, (float("inf"),))])
def test_params_validation(phi, th):
    with pytest.raises(ValueError):
        ModelParams(phi, th)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(1, 2)
    with pytest.raises(ValueError):
        GridSpec(4, 0)
    with pytest.raises(MemoryError):
        GridSpec(2**16, 3)
    assert GridSpec(4, 3).size == 64
    assert GridSpec(4, 3).shape == (4, 4, 4)


def test_context_scalars():
    ctx = ScalarContext(1.0, 2)
    assert ctx.w == 0.5
    assert ctx.u == math.exp(-0.5)
    np.testing.assert_allclose(corr_matrix(ctx)[0, 1], 1.5 * math.exp(-0.5), rtol=1e-15)
    np.testing.assert_allclose(corr_matrix(ctx)[0, 1], 0.909796, atol=1e-6)


@given(theta=thetas, n=st.integers(2, 40))
def test_corr_matrix_structure(theta, n):
    R = corr_matrix(ScalarContext(theta, n))
    np.testing.assert_array_equal(np.diag(R), 1.0)
    np.testing.assert_array_equal(R, R.T)
    np.testing.assert_array_equal(R[1:, 1:], R[:-1, :-1])


@pytest.mark.parametrize("theta", [0.2, 0.5, 1.0, 2.0, 5.0, 10.0])
def test_corr_matrix_spd(theta):
    for n in range(2, 65):
        np.linalg.cholesky(corr_matrix(ScalarContext(theta, n)))


def test_cholesky_succeeds_at_n10():
    np.linalg.cholesky(corr_matrix(ScalarContext(1.0, 10)))


def test_covariance_entry_same_site_is_prefactor():
    p = ModelParams(1.3, (0.7, 2.0))
    g = GridSpec(5, 2)
    assert covariance_entry(p, g, (2, 3), (2, 3)) == variance_prefactor(p)


def test_covariance_entry_one_axis_step():
    p = ModelParams(1.3, (0.7, 2.0))
    g = GridSpec(4, 2)
    w1 = 0.7 / 4
    np.testing.assert_allclose(covariance_entry(p, g, (0.25, 0.5), (0.5, 0.5)),
                               variance_prefactor(p) * (1 + w1) * math.exp(-w1), rtol=1e-14)


def test_covariance_entry_matches_dense_kronecker():
    rng = np.random.default_rng(11)
    p = ModelParams(0.9, (0.6, 1.7))
    g = GridSpec(4, 2)
    S = dense_kron_covariance(p, 4)
    for _ in range(20):
        a, b = rng.integers(1, 5, size=2), rng.integers(1, 5, size=2)
        ia = (a[0] - 1) * 4 + (a[1] - 1)
        ib = (b[0] - 1) * 4 + (b[1] - 1)
        np.testing.assert_allclose(covariance_entry(p, g, tuple(a), tuple(b)), S[ia, ib], rtol=1e-13)


@settings(max_examples=50)
@given(st.lists(st.integers(1, 6), min_size=6, max_size=6), thetas, thetas, thetas)
def test_covariance_entry_symmetry_and_separability(idx, t1, t2, t3):
    p = ModelParams(1.1, (t1, t2, t3))
    g = GridSpec(6, 3)
    a, b = tuple(idx[:3]), tuple(idx[3:])
    v = covariance_entry(p, g, a, b)
    assert v == covariance_entry(p, g, b, a)
    # swap axes 0 and 2 together with their decay rates
    q = ModelParams(1.1, (t3, t2, t1))
    np.testing.assert_allclose(covariance_entry(q, g, a[::-1], b[::-1]), v, rtol=1e-13)
    prod = variance_prefactor(p)
    for x, y, t in zip(a, b, (t1, t2, t3)):
        prod *= matern32_corr(abs(x - y) / 6, t)
    np.testing.assert_allclose(v, prod, rtol=1e-12)


def test_covariance_entry_rejects_off_lattice():
    p = ModelParams(1.0, (1.0,))
    with pytest.raises(ValueError):
        covariance_entry(p, GridSpec(4, 1), (0.3,), (0.5,))
    with pytest.raises(ValueError):
        covariance_entry(p, GridSpec(4, 1), (5,), (1,))

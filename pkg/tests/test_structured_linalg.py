import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfield import structured_linalg as sl
from gridfield.kernel import ScalarContext, corr_matrix
from gridfield.oracle import dense_corr_matrix, dense_inverse, dense_logdet, dense_minor_det
from gridfield.structured_linalg import (NumericalPathError, SignedLog, appendix_b_constants,
                                         canonical_index, cofactor_closed, cofactor_family,
                                         cofactor_recurrence, inverse_entry, inverse_matrix,
                                         logdet_closed, logdet_recurrence, roots, tau_values)

THETAS = (0.5, 1.0, 2.0, 5.0)


def ctx(theta, n):
    return ScalarContext(theta, n)


# -------------------------------------------------------------- SignedLog

finite = st.floats(-1e6, 1e6).filter(lambda x: abs(x) > 1e-6)


@given(finite, finite)
def test_signedlog_mul_div(x, y):
    a, b = SignedLog.from_value(x), SignedLog.from_value(y)
    np.testing.assert_allclose((a * b).value(), x * y, rtol=1e-13)
    np.testing.assert_allclose((a / b).value(), x / y, rtol=1e-13)
    assert (a * b).sign == np.sign(x * y)


@given(finite, finite)
def test_signedlog_add_sub(x, y):
    a, b = SignedLog.from_value(x), SignedLog.from_value(y)
    scale = max(abs(x), abs(y))
    np.testing.assert_allclose((a + b).value(), x + y, atol=1e-13 * scale)
    np.testing.assert_allclose((a - b).value(), x - y, atol=1e-13 * scale)


def test_signedlog_zero_and_huge():
    z = SignedLog.from_value(0.0)
    assert z.is_zero
    big = SignedLog.from_value(sl._mp.mpf("1e-5000"))
    assert big.sign == 1
    np.testing.assert_allclose(float(big.log_mag), -5000 * math.log(10), rtol=1e-14)
    assert big.value() == 0.0
    assert (big * SignedLog.from_value(sl._mp.mpf("1e5000"))).value() == pytest.approx(1.0)


def test_signedlog_pow_and_neg():
    a = SignedLog.from_value(-3.0)
    assert a.pow(3).value() == pytest.approx(-27.0)
    assert a.pow(2).sign == 1
    assert (-a).value() == pytest.approx(3.0)


# -------------------------------------------------------------- sequences

@pytest.mark.parametrize("theta,n", [(1.0, 10), (0.5, 7), (2.0, 100)])
def test_sequence_definitional_identities(theta, n):
    c = ctx(theta, n)
    t1 = tau_values(c, -1)
    assert tau_values(c, -2) == 0.0
    np.testing.assert_allclose(tau_values(c, -2, "tau_hat"), 2 * t1 * c.u, rtol=1e-14)
    np.testing.assert_allclose(tau_values(c, -2, "tau_tilde"), t1 * c.u / 2, rtol=1e-14)


def test_tau_star_zero_is_two_by_two_determinant():
    c = ctx(1.0, 10)
    # frozen from the 50-digit dense 2 x 2 determinant
    np.testing.assert_allclose(tau_values(c, 0, "tau_star"), 0.009335788775642062, rtol=1e-12)
    np.testing.assert_allclose(tau_values(c, 0, "tau_star"), 1 - 1.1**2 * math.exp(-0.2), rtol=1e-10)


def test_tau_values_validation():
    c = ctx(1.0, 10)
    with pytest.raises(ValueError):
        tau_values(c, -3)
    with pytest.raises(ValueError):
        tau_values(c, 0, family="tau_bar")
    with pytest.raises(ValueError):
        tau_values(c, 0, precision="quad")


def test_tau_minus_one_keeps_relative_accuracy_at_small_w():
    # O(w^3) value formed from O(1) operands
    c = ctx(1.0, 10**5)
    with mpmath.workdps(60):
        w = mpmath.mpf(c.w)
        u = mpmath.exp(-w)
        ref = float((w - 1) * u + (1 + w) * u**3)
    np.testing.assert_allclose(tau_values(c, -1), ref, rtol=1e-12)


# -------------------------------------------------------------- roots

@pytest.mark.parametrize("theta", THETAS)
@pytest.mark.parametrize("n", [3, 10, 64, 1000])
def test_root_identities(theta, n):
    c = ctx(theta, n)
    bs = sl._base(c)
    for al in (bs.a1, bs.a2):
        terms = [abs(bs.B * al**2), abs((bs.a - 2 * bs.t1 * bs.u) * al), abs(bs.t1 * bs.u)]
        resid = bs.B * al**2 + (bs.a - 2 * bs.t1 * bs.u) * al + bs.t1 * bs.u
        assert abs(resid) <= 1e-10 * max(terms)
    lhs = bs.a1 * bs.a2 * bs.B - bs.t1 * bs.u
    assert abs(lhs) <= 1e-10 * abs(bs.t1 * bs.u)
    rp = roots(c)
    assert rp.disc > 0
    assert abs(rp.alpha2 / rp.alpha1) < 1


def test_root_ratio_limit():
    rp = roots(ctx(1.0, 1000))
    assert abs(rp.alpha2 / rp.alpha1 - (2 - math.sqrt(3)) / (2 + math.sqrt(3))) < 1e-4


def test_wide_discriminant_small_w_scaling():
    # the discriminant is O(w^6) with leading coefficient 16/3
    for n in (10**4, 10**6):
        c = ctx(1.0, n)
        np.testing.assert_allclose(roots(c).disc / c.w**6, 16 / 3, rtol=10 * c.w)


def test_degenerate_discriminant_raises():
    with pytest.raises(NumericalPathError):
        sl._base_scalars(0.0, 1.0, math.sqrt, math.expm1)


@pytest.mark.parametrize("theta", THETAS)
def test_auto_precision_routing(theta):
    n_small_w = int(theta / 1e-3)
    assert sl._resolve("auto", ctx(theta, n_small_w).w) == "wide"
    assert sl._resolve("auto", ctx(theta, 4).w) == "double"


# -------------------------------------------------------------- constants

@pytest.mark.parametrize("theta", (0.1, 1.0, 10.0))
@pytest.mark.parametrize("n", (6, 20, 500))
def test_constants_finite(theta, n):
    assert np.all(np.isfinite(appendix_b_constants(ctx(theta, n)).as_array()))


def test_constants_drive_cofactors_matching_recurrence():
    c = ctx(1.0, 20)
    assert cofactor_family(*canonical_index(5, 5, 20), 20) == "diag"
    assert cofactor_family(4, 9, 20) == "band"
    for cell in [(5, 5), (4, 9)]:
        a = cofactor_closed(c, *cell)
        b = cofactor_recurrence(c, *cell)
        assert a.sign == b.sign
        assert abs(float(a.log_mag - b.log_mag)) < 1e-8


# -------------------------------------------------------------- determinant

def test_logdet_n2_closed_form():
    for theta in THETAS:
        c = ctx(theta, 2)
        ref = math.log(1 - (1 + c.w) ** 2 * c.u**2)
        np.testing.assert_allclose(float(logdet_closed(c).log_mag), ref, rtol=1e-12)


def test_logdet_frozen_values():
    # frozen from the 50-digit dense LU oracle
    np.testing.assert_allclose(float(logdet_closed(ctx(1.0, 5)).log_mag), -16.23867525822761, rtol=1e-10)
    np.testing.assert_allclose(float(logdet_closed(ctx(2.0, 50)).log_mag), -429.98700397217124, rtol=1e-9)


def test_logdet_recurrence_small_blocks():
    c = ctx(1.0, 10)
    one = logdet_recurrence(c, 1)
    assert one.sign == 1 and float(one.log_mag) == 0.0
    np.testing.assert_allclose(float(logdet_recurrence(c, 2).log_mag), math.log(0.009335788775642062),
                               rtol=1e-12)
    with pytest.raises(ValueError):
        logdet_recurrence(c, 11)


def test_logdet_recurrence_equals_closed_n8():
    c = ctx(1.0, 8)
    np.testing.assert_allclose(float(logdet_recurrence(c).log_mag), float(logdet_closed(c).log_mag),
                               rtol=1e-10)


@pytest.mark.parametrize("theta", THETAS)
def test_logdet_path_equivalence(theta):
    for n in range(2, 65):
        c = ctx(theta, n)
        closed = logdet_closed(c)
        assert closed.sign == 1
        lc = float(closed.log_mag)
        tol = 1e-9 * max(1.0, abs(lc))
        assert abs(lc - float(logdet_recurrence(c).log_mag)) <= tol
        assert abs(lc - dense_logdet(corr_matrix(c)).log_mag) <= tol


def test_logdet_no_underflow_large_n():
    # the determinant itself is far below the double range here
    c = ctx(1.0, 400)
    lc = float(logdet_closed(c).log_mag)
    assert lc < -1500
    np.testing.assert_allclose(lc, float(logdet_recurrence(c).log_mag), rtol=1e-12)


# -------------------------------------------------------------- cofactors

def test_canonical_index():
    assert canonical_index(1, 1, 5) == (5, 5)
    assert canonical_index(3, 1, 5) == (3, 5)
    assert canonical_index(2, 4, 5) == (2, 4)
    with pytest.raises(IndexError):
        canonical_index(0, 1, 5)


def test_first_row_closed_form():
    c = ctx(1.0, 6)
    t1 = tau_values(c, -1)
    ref = c.w**2 * c.u**2 * abs(t1) ** 3
    np.testing.assert_allclose(cofactor_closed(c, 1, 6).value() * np.sign(1), ref * np.sign(t1) ** 3,
                               rtol=1e-12)
    np.testing.assert_allclose(abs(dense_minor_det(dense_corr_matrix(c, wide=True), 1, 6).value()),
                               ref, rtol=1e-12)
    # the general recurrence agrees with the first-row form
    a, b = cofactor_closed(c, 1, 6), cofactor_recurrence(c, 1, 6)
    assert a.sign == b.sign and abs(float(a.log_mag - b.log_mag)) < 1e-12


@pytest.mark.parametrize("theta,n,i,j,logmag", [
    (1.0, 12, 5, 5, -63.31511075506544),
    (1.0, 12, 4, 9, -68.4364406215365),
    (0.5, 7, 3, 3, -31.82548776479082),
    (2.0, 10, 4, 7, -34.16083203849868),
    (1.0, 8, 2, 8, -37.11713244384239),
])
def test_cofactor_frozen(theta, n, i, j, logmag):
    # frozen from the 50-digit dense minor oracle
    v = cofactor_closed(ctx(theta, n), i, j)
    assert v.sign == 1
    np.testing.assert_allclose(float(v.log_mag), logmag, rtol=1e-10)


@pytest.mark.parametrize("theta", (0.5, 2.0))
def test_cofactor_equivalence_all_cells(theta):
    for n in range(2, 17, 2 if theta == 0.5 else 3):
        c = ctx(theta, n)
        M = dense_corr_matrix(c, wide=True)
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                a = cofactor_closed(c, i, j)
                b = cofactor_recurrence(c, i, j)
                ref = dense_minor_det(M, i, j)
                assert a.sign == b.sign == ref.sign, (n, i, j)
                la = float(a.log_mag)
                assert abs(la - float(b.log_mag)) <= 1e-8 * max(1, abs(la))
                assert abs(la - float(ref.log_mag)) <= 1e-8 * max(1, abs(la))


def test_every_family_is_exercised():
    seen = {cofactor_family(*canonical_index(i, j, 12), 12) for i in range(1, 13) for j in range(1, 13)}
    assert seen >= {"det", "first_row", "second_row", "edge_diag", "edge_offdiag", "diag", "offdiag",
                    "last_col", "band"}


# -------------------------------------------------------------- inverse

def test_inverse_two_by_two():
    c = ctx(1.0, 2)
    ref = 1 / (1 - 1.5**2 * math.exp(-1))
    np.testing.assert_allclose(inverse_entry(c, 1, 1), ref, rtol=1e-12)
    np.testing.assert_allclose(inverse_entry(c, 1, 2), -1.5 * math.exp(-0.5) * ref, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(theta=st.sampled_from(THETAS), n=st.integers(2, 30), data=st.data())
def test_inverse_entry_symmetries(theta, n, data):
    i = data.draw(st.integers(1, n))
    j = data.draw(st.integers(1, n))
    c = ctx(theta, n)
    v = inverse_entry(c, i, j)
    assert v == inverse_entry(c, j, i)
    assert v == inverse_entry(c, n - j + 1, n - i + 1)


def test_inverse_matrix_structure_and_diagonal():
    for theta in THETAS:
        for n in (2, 3, 7, 33):
            Ri = inverse_matrix(ctx(theta, n))
            np.testing.assert_array_equal(Ri, Ri.T)
            np.testing.assert_array_equal(Ri, Ri[::-1, ::-1].T)
            assert np.all(np.diag(Ri) > 0)


def test_inverse_residual_n8():
    c = ctx(1.0, 8)
    assert np.abs(inverse_matrix(c) @ corr_matrix(c) - np.eye(8)).max() <= 1e-8


@pytest.mark.parametrize("theta", THETAS)
def test_inverse_matches_wide_dense_inverse(theta):
    for n in (5, 9, 16):
        c = ctx(theta, n)
        ref = dense_inverse(dense_corr_matrix(c, wide=True))
        Ri = inverse_matrix(c)
        big = np.abs(ref) > 1e-6
        np.testing.assert_allclose(Ri[big], ref[big], rtol=1e-7)


def test_inverse_matrix_matches_entrywise_path():
    c = ctx(0.5, 21)
    Ri = inverse_matrix(c)
    E = np.array([[inverse_entry(c, i, j) for j in range(1, 22)] for i in range(1, 22)])
    np.testing.assert_allclose(Ri, E, rtol=1e-13)


@pytest.mark.parametrize("theta", (0.1, 0.2))
def test_inverse_residual_at_small_theta_is_representation_limited(theta):
    # |R^-1| ~ 1/w^3 makes even the correctly rounded inverse leave a large residual
    own = rounded = 0.0
    for n in range(8, 65, 8):
        c = ctx(theta, n)
        R = corr_matrix(c)
        own = max(own, np.abs(inverse_matrix(c) @ R - np.eye(n)).max())
        rounded = max(rounded, np.abs(dense_inverse(dense_corr_matrix(c, wide=True)) @ R - np.eye(n)).max())
    assert own <= 4 * rounded
    if theta == 0.1:
        assert rounded > 1e-7


def test_inverse_index_errors():
    with pytest.raises(IndexError):
        inverse_entry(ctx(1.0, 4), 0, 2)
    with pytest.raises(IndexError):
        cofactor_closed(ctx(1.0, 4), 5, 1)

"""Large-n approximations for the one-axis correlation matrix.

Covers the approximate log-determinant, the approximate inverse entries,
the trace expansions used by the Fisher information, and the entrywise
derivatives of the correlation matrix in ``theta``.

The approximations drop terms of relative size ``(alpha2/alpha1)^n``, where
``alpha2/alpha1 -> (2 - sqrt 3)/(2 + sqrt 3) ~ 0.0718``. They refuse
``n < 8``, where the dropped terms are not negligible.
"""

import math

import numpy as np

from .kernel import ScalarContext, corr_matrix
from .structured_linalg import (SignedLog, _base, _consts, _mp, _second_row_factor, _tau,
                                canonical_index, inverse_matrix)

MIN_N_APPROX = 8
ROOT_RATIO_LIMIT = (2 - math.sqrt(3)) / (2 + math.sqrt(3))


def logdet_approx(ctx, form="leading"):
    """Approximate log-determinant of the ``n x n`` correlation matrix.

    Parameters
    ----------
    ctx : ScalarContext
        ``n >= 4``.
    form : {"leading", "expansion"}
        ``"leading"`` keeps only the dominant root:
        ``(a_tilde alpha1 + u^2 b_tilde)/(alpha1 - alpha2) * P1^(n-2)``.
        Its relative error is about ``(alpha2/alpha1)^n``.
        ``"expansion"`` is the explicit small-``w`` form
        ``w^(3n-4) e^(-2(n-2)w) (sqrt3/4) [2(2+sqrt3)/3]^(n-1)
        [1 + (12+7 sqrt3) n w^2 / (60+30 sqrt3)]``, accurate to first order in ``w``.

    Returns
    -------
    SignedLog
    """
    n = ctx.n
    if n < 4:
        raise ValueError("approximate log-determinant needs n >= 4")
    if form == "leading":
        bs = _base(ctx, "wide")
        return (SignedLog.from_value(bs.E1) / SignedLog.from_value(bs.dd)
                * SignedLog.from_value(bs.P1).pow(n - 2))
    if form == "expansion":
        w = _mp.mpf(ctx.w)
        s3 = _mp.sqrt(3)
        lm = ((3 * n - 4) * _mp.log(w) - 2 * (n - 2) * w + _mp.log(s3 / 4)
              + (n - 1) * _mp.log(2 * (2 + s3) / 3)
              + _mp.log(1 + (12 + 7 * s3) * n * w**2 / (60 + 30 * s3)))
        return SignedLog(1, lm)
    raise ValueError(f"unknown form {form!r}")


def inverse_entry_approx(ctx, i, j):
    """Approximate inverse entry for large ``n``.

    The cell is canonicalized into ``i <= j, i + j >= n + 1``. The boundary
    cells use the boundary formulas. Interior cells ``(i, i)``,
    ``(i, i+1)``, ``(i, j >= i+2)`` and ``(i, n)`` with ``3 <= i <= n-2``
    use the interior formulas. Each formula approximates the determinant
    by its dominant-root term.
    """
    n = ctx.n
    if n < MIN_N_APPROX:
        raise ValueError(f"approximations need n >= {MIN_N_APPROX}")
    i, j = canonical_index(i, j, n)
    bs = _base(ctx, "wide")
    C = _consts(ctx, "wide")
    w, u, t1 = bs.w, bs.u, bs.t1
    a1, a2, dd = bs.a1, bs.a2, bs.dd
    P1, P2, E1, E2, F1, F2 = bs.P1, bs.P2, bs.E1, bs.E2, bs.F1, bs.F2
    r = a2 / a1
    g = -u / a1

    if (i, j) == (n, n):
        v = -1 / (bs.B * a1)
    elif i == 1:
        v = (-1) ** (n + 1) * w**2 * u**2 * dd / (t1 * E1) * g**(n - 2)
    elif i == 2 and j == n:
        v = (-1) ** n * _second_row_factor(bs) * dd / (t1**2 * E1) * g**(n - 2)
    elif i == 2:
        v = ((-1) ** (n - 3) * _tau(0, w, u) * _second_row_factor(bs) * dd / (t1**3 * E1)
             * g**(n - 2))
    elif (i, j) == (n - 1, n - 1):
        v = C[7, 1] / P1**2 - C[7, 2] * E2 / (E1 * P1**2) * r**(n - 4)
    elif (i, j) == (n - 1, n):
        v = -C[3, 1] / P1**2
    elif j in (i, i + 1):
        c1, c2 = (1, 2) if j == i else (4, 5)
        K = t1 * u**4 / dd
        K2 = t1 * u**6 / dd
        v = (C[c1, 1] * K * ((a1 - u**2) / P1**3 - (a2 - u**2) / P1**3 * r**(n - i - 2))
             - C[c1, 2] * K * E2 / E1 * ((a1 - u**2) / P2**3 * r**i - (a2 - u**2) / P2**3 * r**(n - 2))
             + C[c2, 1] * K2 * (1 / P1**3 - r**(n - i - 2) / P1**3)
             - C[c2, 2] * K2 * E2 / E1 * (r**i / P2**3 - r**(n - 2) / P2**3))
        if j == i + 1:
            # odd checkerboard sign applies to the whole bracket
            v = -v
    elif j == n:
        h = (u / a1)**(n - i - 2)
        v = C[6, 1] / P1**3 * h - C[6, 2] * E2 / (E1 * P2**3) * h * r**i
    else:
        v = (1 / (t1**4 * dd) * (u / a1)**(j - i + 2)
             * (C[6, 1] * (F1 - F2 * r**(n - j - 1))
                - C[6, 2] * E2 / E1 * (F1 * r**(i - 3) - F2 * r**(n - j + i - 4))))
    return float(v)


def trace_rinv_r(theta, theta_tilde, n):
    """Expansion of ``(1/n) tr(R_theta^-1 R_theta_tilde)`` through O(1/n).

    ``q^3 - (w/4)(3 q^4 - 2 q^2 - 1) + (1/n)(1 + q^2 - 2 q^3)`` with
    ``q = theta_tilde/theta`` and ``w = theta/n``.
    """
    q = theta_tilde / theta
    w = theta / n
    return q**3 - (w / 4) * (3 * q**4 - 2 * q**2 - 1) + (1 + q**2 - 2 * q**3) / n


def trace_derivatives(theta, n):
    """Expansions of ``(1/n) tr[(d R^-1/d theta) R]`` and ``(1/n) tr[(d^2 R^-1/d theta^2) R]``.

    Returns
    -------
    tuple of float
        ``(-3/theta + 2(theta+2)/(theta n), 12/theta^2 - 2(4 theta+9)/(theta^2 n))``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    first = -3 / theta + 2 * (theta + 2) / (theta * n)
    second = 12 / theta**2 - 2 * (4 * theta + 9) / (theta**2 * n)
    return first, second


def corr_matrix_derivatives(ctx, order=1):
    """Entrywise first or second derivative of the correlation matrix in ``theta``.

    order 1: ``-k^2 w e^(-k w) / n``; order 2: ``-k^2 (1 - k w) e^(-k w) / n^2``,
    with ``k = |i - j|``.
    """
    n = ctx.n
    if n < 2:
        raise ValueError("n must be >= 2")
    k = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
    decay = np.power(ctx.u, k)
    if order == 1:
        return -k**2 * ctx.w * decay / n
    if order == 2:
        return -k**2 * (1 - k * ctx.w) * decay / n**2
    raise ValueError("order must be 1 or 2")


def trace_rinv_r_exact(theta, theta_tilde, n):
    """``(1/n) tr(R_theta^-1 R_theta_tilde)`` from the closed-form inverse.

    Equal rates return 1 exactly.
    """
    if theta == theta_tilde:
        return 1.0
    Ri = inverse_matrix(ScalarContext(theta, n))
    Rt = corr_matrix(ScalarContext(theta_tilde, n))
    return float(np.sum(Ri * Rt.T)) / n


def trace_derivatives_exact(theta, n):
    """Exact counterparts of :func:`trace_derivatives`.

    Uses ``tr[(dR^-1) R] = -tr(R^-1 R')`` and
    ``tr[(d^2 R^-1) R] = 2 tr(R^-1 R' R^-1 R') - tr(R^-1 R'')``.
    """
    ctx = ScalarContext(theta, n)
    Ri = inverse_matrix(ctx)
    D1 = corr_matrix_derivatives(ctx, 1)
    D2 = corr_matrix_derivatives(ctx, 2)
    M = Ri @ D1
    first = -np.trace(M) / n
    second = (2 * np.sum(M * M.T) - np.sum(Ri * D2.T)) / n
    return float(first), float(second)


def trace_rinv_r_squared_bound(theta, theta_tilde, n):
    """``(1/n) tr[(R_theta^-1 R_theta_tilde)^2]`` computed exactly.

    No closed form is claimed; only boundedness in ``n`` is expected.
    Equal rates return 1 exactly.
    """
    if theta == theta_tilde:
        return 1.0
    Ri = inverse_matrix(ScalarContext(theta, n))
    Rt = corr_matrix(ScalarContext(theta_tilde, n))
    A = Ri @ Rt
    return float(np.sum(A * A.T)) / n

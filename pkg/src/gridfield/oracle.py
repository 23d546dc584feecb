"""Brute-force dense references used only for validation.

Nothing here uses the closed forms. Matrices are built entrywise from the
kernel definition and factorized with LU under partial pivoting. Float64
inputs go to LAPACK. For the ill-conditioned one-axis matrices (condition
~ 1/w^3), ``wide=True`` rebuilds the matrix from the same double ``w`` in 50-digit
arithmetic and factorizes it there.
"""

import math

import mpmath
import numpy as np

from .kernel import GridSpec, ScalarContext, corr_matrix, log_variance_prefactor
from .structured_linalg import SignedLog

DENSE_MAX_SITES = 4096

_mp = mpmath.MPContext()
_mp.dps = 50


def _is_wide_matrix(M):
    return isinstance(M, _mp.matrix)


def dense_corr_matrix(ctx, wide=False):
    """One-axis correlation matrix, optionally in 50-digit arithmetic."""
    if not wide:
        return corr_matrix(ctx)
    n = ctx.n
    w = _mp.mpf(ctx.w)
    u = _mp.exp(-w)
    lag = [(1 + k * w) * u**k for k in range(n)]
    return _mp.matrix([[lag[abs(i - j)] for j in range(n)] for i in range(n)])


def _lu_det_wide(M):
    # Doolittle LU with partial pivoting on a copy
    n = M.rows
    A = [[M[i, j] for j in range(n)] for i in range(n)]
    det = _mp.mpf(1)
    for k in range(n):
        p = max(range(k, n), key=lambda r: abs(A[r][k]))
        if A[p][k] == 0:
            return _mp.mpf(0)
        if p != k:
            A[k], A[p] = A[p], A[k]
            det = -det
        piv = A[k][k]
        det *= piv
        for r in range(k + 1, n):
            f = A[r][k] / piv
            if f:
                row_r, row_k = A[r], A[k]
                for c in range(k + 1, n):
                    row_r[c] -= f * row_k[c]
    return det


def dense_logdet(M):
    """Signed log-determinant by LU with partial pivoting.

    Parameters
    ----------
    M : ndarray or wide matrix (from :func:`dense_corr_matrix` with ``wide=True``)

    Returns
    -------
    SignedLog

    Raises
    ------
    ZeroDivisionError
        If ``M`` is exactly singular.
    """
    if _is_wide_matrix(M):
        if M.rows != M.cols:
            raise ValueError("matrix must be square")
        if M.rows == 0:
            return SignedLog(1, 0.0)
        det = _lu_det_wide(M)
        if det == 0:
            raise ZeroDivisionError("matrix is exactly singular")
        return SignedLog(1 if det > 0 else -1, float(_mp.log(abs(det))))
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if M.shape[0] == 0:
        return SignedLog(1, 0.0)
    sign, logabs = np.linalg.slogdet(M)
    if sign == 0:
        raise ZeroDivisionError("matrix is exactly singular")
    return SignedLog(int(sign), float(logabs))


def dense_minor_det(M, i, j):
    """Determinant of ``M`` with row ``i`` and column ``j`` removed (1-based)."""
    if _is_wide_matrix(M):
        n = M.rows
        if not (1 <= i <= n and 1 <= j <= n):
            raise IndexError("minor index out of range")
        rows = [r for r in range(n) if r != i - 1]
        cols = [c for c in range(n) if c != j - 1]
        sub = _mp.matrix([[M[r, c] for c in cols] for r in rows]) if n > 1 else _mp.matrix(0, 0)
        return dense_logdet(sub)
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError("minor index out of range")
    sub = np.delete(np.delete(M, i - 1, axis=0), j - 1, axis=1)
    return dense_logdet(sub)


def dense_inverse(M):
    """Dense inverse; float64 for arrays, 50-digit LU for wide matrices."""
    if _is_wide_matrix(M):
        inv = _mp.inverse(M)
        return np.array([[float(inv[i, j]) for j in range(M.cols)] for i in range(M.rows)])
    return np.linalg.inv(np.asarray(M, dtype=float))


def dense_kron_covariance(params, n):
    """Materialized covariance of the lattice observations (lexicographic order)."""
    grid = GridSpec(n, params.d)
    if grid.size > DENSE_MAX_SITES:
        raise MemoryError(f"dense covariance with {grid.size} sites exceeds {DENSE_MAX_SITES}")
    S = np.ones((1, 1))
    for theta in params.thetas:
        S = np.kron(S, corr_matrix(ScalarContext(theta, n)))
    return math.exp(log_variance_prefactor(params)) * S


def dense_mvn_logdensity(field, params):
    """Gaussian log-density of a lattice field under the dense covariance."""
    x = np.asarray(field.values, dtype=float).ravel()
    S = dense_kron_covariance(params, field.grid.n)
    if S.shape[0] != x.size:
        raise ValueError("field size does not match the covariance")
    ld = dense_logdet(S)
    if ld.sign <= 0:
        raise ValueError("covariance is not positive definite")
    q = float(x @ np.linalg.solve(S, x))
    return -0.5 * x.size * math.log(2 * math.pi) - 0.5 * float(ld.log_mag) - 0.5 * q

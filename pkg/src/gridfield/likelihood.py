"""Gaussian log-likelihood and Fisher information on the lattice.

The covariance is ``prefactor * kron(R_1, ..., R_d)``. The quadratic form is
applied as ``d`` mode products of the per-axis inverses with the field
reshaped to an ``n x ... x n`` tensor. That costs O(d n^(d+1)) and never
forms the ``n^d x n^d`` matrix.
"""

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import corr_matrix_derivatives
from .kernel import GridSpec, ScalarContext, log_variance_prefactor
from .structured_linalg import inverse_matrix, logdet_closed

MAX_FISHER_N = 256


@dataclass(frozen=True)
class LatticeField:
    """Observations in lexicographic site order (first axis varies slowest)."""

    values: np.ndarray
    grid: GridSpec
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float).ravel())
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid needs {self.grid.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def tensor(self):
        return self.values.reshape(self.grid.shape)


class _AxisCache:
    """Bounded get-or-compute cache; one computation per key."""

    def __init__(self, maxsize=128):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()
        self._key_locks = {}

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
            klock = self._key_locks.setdefault(key, threading.Lock())
        with klock:
            with self._lock:
                if key in self._data:
                    return self._data[key]
            value = compute()
            with self._lock:
                self._data[key] = value
                self._data.move_to_end(key)
                while len(self._data) > self.maxsize:
                    self._data.popitem(last=False)
                self._key_locks.pop(key, None)
            return value

    def clear(self):
        with self._lock:
            self._data.clear()


_cache = _AxisCache()


def axis_inverse(theta, n):
    """Cached read-only inverse of the one-axis correlation matrix."""
    def compute():
        Ri = inverse_matrix(ScalarContext(theta, n))
        Ri.setflags(write=False)
        return Ri
    return _cache.get(("inv", float(theta), int(n)), compute)


def axis_logdet(theta, n):
    """Cached log-determinant of the one-axis correlation matrix."""
    return _cache.get(("logdet", float(theta), int(n)),
                      lambda: float(logdet_closed(ScalarContext(theta, n)).log_mag))


def mode_product(T, M, axis):
    """Multiply tensor ``T`` by matrix ``M`` along ``axis``."""
    return np.moveaxis(np.tensordot(M, T, axes=(1, axis)), 0, axis)


def _check(field, params):
    if params.d != field.grid.d:
        raise ValueError(f"params have d={params.d}, field grid has d={field.grid.d}")


def _kron_quad(field, thetas):
    T = field.tensor()
    Y = T
    for axis, theta in enumerate(thetas):
        Y = mode_product(Y, axis_inverse(theta, field.grid.n), axis)
    return float(np.vdot(T, Y))


def quad_form(field, params):
    """``x' (kron_t R_t)^-1 x`` by successive mode products.

    The scalar prefactor is not included.
    """
    _check(field, params)
    return _kron_quad(field, params.thetas)


def loglik_parts(field, params):
    """Log-likelihood with its ingredients.

    Returns
    -------
    dict
        ``loglik``; ``logdet`` (log-determinant of the full covariance);
        ``quad_form`` (the Kronecker quadratic form without prefactor);
        ``axis_logdets``.
    """
    _check(field, params)
    n, d = field.grid.n, field.grid.d
    N = field.grid.size
    q = _kron_quad(field, params.thetas)
    lds = [axis_logdet(t, n) for t in params.thetas]
    logpre = log_variance_prefactor(params)
    two = (-N * math.log(2 * math.pi) - d * N * math.log(math.pi / 2) - d * N * math.log(params.phi)
           + 3 * N * sum(math.log(t) for t in params.thetas)
           - n ** (d - 1) * sum(lds) - math.exp(-logpre) * q)
    ll = 0.5 * two
    if not math.isfinite(ll):
        raise FloatingPointError("log-likelihood is not finite")
    return {"loglik": ll, "logdet": N * logpre + n ** (d - 1) * sum(lds),
            "quad_form": q, "axis_logdets": lds}


def loglik(field, params):
    """Exact Gaussian log-likelihood of the lattice field."""
    return loglik_parts(field, params)["loglik"]


def fisher_asymptotic(params, n):
    """Leading-order Fisher information; index 0 is ``phi``, 1..d the decays.

    ``(phi, phi) = d^2 n^d / (2 phi^2)`` is exact. The remaining entries keep
    only the order ``n^(d-1)`` terms, so the cross decay entries are zero.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    d, phi = params.d, params.phi
    F = np.zeros((d + 1, d + 1))
    F[0, 0] = d**2 * n**d / (2 * phi**2)
    for t, th in enumerate(params.thetas, start=1):
        F[t, t] = n ** (d - 1) * (2 * th + 5) / th**2
        F[0, t] = F[t, 0] = -d * n ** (d - 1) * (th + 2) / (phi * th)
    return F


def fisher_trace_exact(params, n):
    """Finite-``n`` Fisher information from exact per-axis traces.

    With ``M_t = R_t^-1 dR_t/dtheta_t``, the covariance derivative satisfies
    ``Sigma^-1 dSigma/dtheta_t = -3/theta_t I + (I x .. x M_t x .. x I)``.
    Also ``Sigma^-1 dSigma/dphi = (d/phi) I``. Each entry
    ``(1/2) tr(Sigma^-1 Sigma_a Sigma^-1 Sigma_b)`` then reduces to
    ``tr M_t`` and ``tr M_t^2``.
    """
    if not 2 <= n <= MAX_FISHER_N:
        raise ValueError(f"exact Fisher information needs 2 <= n <= {MAX_FISHER_N}")
    d, phi = params.d, params.phi
    N = float(n) ** d
    trM, trM2 = [], []
    for th in params.thetas:
        ctx = ScalarContext(th, n)
        M = axis_inverse(th, n) @ corr_matrix_derivatives(ctx, 1)
        trM.append(float(np.trace(M)))
        trM2.append(float(np.sum(M * M.T)))
    F = np.zeros((d + 1, d + 1))
    F[0, 0] = d**2 * N / (2 * phi**2)
    for t, th in enumerate(params.thetas):
        c = trM[t] - 3 * n / th  # n^(d-1) c is the trace of the decay score operator
        F[0, t + 1] = F[t + 1, 0] = 0.5 * (d / phi) * N / n * c
        F[t + 1, t + 1] = 0.5 * (9 * N / th**2 - 6 / th * N / n * trM[t] + N / n * trM2[t])
        for s in range(t):
            cs = trM[s] - 3 * n / params.thetas[s]
            F[s + 1, t + 1] = F[t + 1, s + 1] = 0.5 * N / n**2 * cs * c
    return F

"""Matern-3/2 correlation kernel on a regular lattice in the unit cube.

The covariance of the field between lattice sites ``x`` and ``y`` is

    pi^d phi^d / (2^d prod_t theta_t^3) * prod_t (1 + theta_t |x_t - y_t|) exp(-theta_t |x_t - y_t|)

so the covariance of the lattice observations is a scalar prefactor times a
Kronecker product of one-axis correlation matrices. The full covariance is
never built here; see :mod:`gridfield.oracle` for the dense version.
"""

import math
import numbers
from dataclasses import dataclass, field

import numpy as np

# Largest number of lattice sites accepted by GridSpec (8 GiB of float64).
MAX_SITES = 2**30


@dataclass(frozen=True)
class ModelParams:
    """Scale ``phi`` and per-axis decay rates ``thetas``."""

    phi: float
    thetas: tuple

    def __post_init__(self):
        thetas = tuple(float(t) for t in np.atleast_1d(self.thetas))
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phi", float(self.phi))
        if not (math.isfinite(self.phi) and self.phi > 0):
            raise ValueError(f"phi must be positive and finite, got {self.phi}")
        if len(thetas) < 1:
            raise ValueError("at least one decay rate is required")
        for t in thetas:
            if not (math.isfinite(t) and t > 0):
                raise ValueError(f"decay rates must be positive and finite, got {t}")

    @property
    def d(self):
        return len(self.thetas)


@dataclass(frozen=True)
class GridSpec:
    """Lattice ``{(i_1/n, ..., i_d/n) : 1 <= i_t <= n}``."""

    n: int
    d: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d", int(self.d))
        if self.n ** self.d > MAX_SITES:
            raise MemoryError(f"lattice with n^d = {self.n}^{self.d} sites exceeds {MAX_SITES}")

    @property
    def size(self):
        return self.n ** self.d

    @property
    def shape(self):
        return (self.n,) * self.d


@dataclass(frozen=True)
class ScalarContext:
    """Per-axis scalars ``w = theta/n`` and ``u = exp(-w)``.

    ``u`` is the double-precision ``exp(-w)``; every closed form treats the
    pair ``(w, u)`` as exact inputs, so dense and structured paths see the
    same matrix.
    """

    theta: float
    n: int
    w: float = field(init=False)
    u: float = field(init=False)

    def __post_init__(self):
        theta = float(self.theta)
        if not (math.isfinite(theta) and theta > 0):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n", int(self.n))
        w = theta / self.n
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", math.exp(-w))


def matern32_corr(s, theta):
    """Matern-3/2 correlation ``(1 + theta s) exp(-theta s)``.

    Parameters
    ----------
    s : float or array_like
        Nonnegative distance.
    theta : float
        Decay rate, > 0.

    Returns
    -------
    float or ndarray
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("distance must be nonnegative")
    ts = theta * s
    out = (1.0 + ts) * np.exp(-ts)
    return float(out) if out.ndim == 0 else out


def variance_prefactor(params):
    """Marginal variance ``pi^d phi^d / (2^d prod theta_t^3)``."""
    d = params.d
    logv = d * math.log(math.pi * params.phi / 2.0) - 3.0 * sum(math.log(t) for t in params.thetas)
    if logv > 709.0:
        raise OverflowError("variance prefactor overflows double precision")
    return math.exp(logv)


def log_variance_prefactor(params):
    d = params.d
    return d * math.log(math.pi * params.phi / 2.0) - 3.0 * sum(math.log(t) for t in params.thetas)


def _lag_corr(lags, w, u):
    # integer lags scaled by w; u**k keeps the same rounding as the closed forms
    return (1.0 + lags * w) * np.power(u, lags)


def corr_matrix(ctx):
    """One-axis correlation matrix with entries ``(1 + |i-j| w) u^|i-j|``."""
    n = ctx.n
    if n < 2:
        raise ValueError("n must be >= 2")
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return _lag_corr(lags, ctx.w, ctx.u)


def _site_indices(site, grid):
    site = tuple(site)
    if len(site) != grid.d:
        raise ValueError(f"site has {len(site)} coordinates, grid has d={grid.d}")
    out = []
    for x in site:
        if isinstance(x, numbers.Integral):
            k = int(x)
        else:
            k = int(round(float(x) * grid.n))
            if abs(float(x) * grid.n - k) > 1e-9 * grid.n:
                raise ValueError(f"coordinate {x} is not on the lattice with n={grid.n}")
        if not 1 <= k <= grid.n:
            raise ValueError(f"site coordinate {x} outside the lattice 1..{grid.n}")
        out.append(k)
    return out


def covariance_entry(params, grid, site_a, site_b):
    """Covariance between two lattice sites.

    Sites are either integer index tuples ``(i_1, ..., i_d)`` with
    ``1 <= i_t <= n`` or coordinate tuples ``(i_1/n, ..., i_d/n)``.
    """
    if params.d != grid.d:
        raise ValueError("params and grid disagree on d")
    a = _site_indices(site_a, grid)
    b = _site_indices(site_b, grid)
    val = variance_prefactor(params)
    for ia, ib, theta in zip(a, b, params.thetas):
        ctx = ScalarContext(theta, grid.n)
        k = abs(ia - ib)
        val *= (1.0 + k * ctx.w) * ctx.u ** k
    return val

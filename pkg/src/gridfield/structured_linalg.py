"""Exact determinant, cofactors and inverse of the one-axis correlation matrix.

Everything here is a closed form in the two scalars ``w = theta/n`` and
``u = exp(-w)``. The auxiliary sequences are

* ``tau(k)``: the banded entries left after eliminating with the first two
  rows; ``tau(-1) ~ 2 w^3 / 3`` carries the determinant's scale.
* ``tau_star(k)``, ``tau_hat(k)``, ``tau_tilde(k)``: boundary variants for
  the first row, the deleted row, and the row after it.

The determinant of ``R_m`` is a two-term geometric expression in the roots
``alpha1, alpha2`` of ``tau(-1) u + (a - 2 tau(-1) u) z + (b + tau(-1) u) z^2``.
Each cofactor reduces to an upper Hessenberg determinant. That determinant
has both an O(n^2) recurrence and a closed form built from fourteen
constants ``C[k, i]``.

Precision
---------
``tau(-1)``, ``a - 2 tau(-1) u`` and the discriminant are tiny differences
of O(1) terms. The per-axis scalars are therefore formed in a 50-digit
mpmath context by default (``precision="wide"``). ``"double"`` forms them in
float64. ``"auto"`` uses float64 only when ``w >= 1e-2``. All algebra after
the per-axis scalars runs in the wide context, which has an unbounded
exponent range. Determinants and cofactors come back as :class:`SignedLog`.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .kernel import ScalarContext

WIDE_DPS = 50
CROSSOVER_W = 1e-2
PRECISIONS = ("wide", "double", "auto")
FAMILIES = ("tau", "tau_star", "tau_hat", "tau_tilde")

_mp = mpmath.MPContext()
_mp.dps = WIDE_DPS


class NumericalPathError(ArithmeticError):
    """Raised when a root computation degenerates (never a valid input)."""


# ---------------------------------------------------------------------------
# signed log-magnitude numbers


def _is_wide(x):
    return isinstance(x, _mp.mpf)


@dataclass(frozen=True)
class SignedLog:
    """A real number stored as ``sign * exp(log_mag)``.

    ``log_mag`` is a float, or a wide mpf when produced by the wide path.
    Products and quotients add one rounding of ``log_mag``. Sums add at most
    two roundings relative to ``max(1, |log_mag|)``. In the float case that
    is about 2 ulp of the larger operand's log.
    """

    sign: int
    log_mag: object

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")
        if self.sign == 0:
            object.__setattr__(self, "log_mag", -math.inf)

    @classmethod
    def from_value(cls, x):
        if _is_wide(x):
            if x == 0:
                return cls(0, -math.inf)
            return cls(1 if x > 0 else -1, _mp.log(abs(x)))
        x = float(x)
        if x == 0.0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @property
    def is_zero(self):
        return self.sign == 0

    def value(self):
        """Plain float value; may underflow to 0 or overflow to inf."""
        if self.sign == 0:
            return 0.0
        lm = float(self.log_mag)
        if lm > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(lm)

    def wide_value(self):
        """Value in the wide context (no underflow)."""
        if self.sign == 0:
            return _mp.mpf(0)
        return self.sign * _mp.exp(_mp.mpf(self.log_mag))

    def __float__(self):
        return self.value()

    def __neg__(self):
        return SignedLog(-self.sign, self.log_mag)

    def __mul__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        if self.sign == 0 or other.sign == 0:
            return SignedLog(0, -math.inf)
        return SignedLog(self.sign * other.sign, self.log_mag + other.log_mag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLog")
        if self.sign == 0:
            return SignedLog(0, -math.inf)
        return SignedLog(self.sign * other.sign, self.log_mag - other.log_mag)

    def __add__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        diff = small.log_mag - big.log_mag
        wide = _is_wide(diff)
        lib = _mp if wide else math
        if big.sign == small.sign:
            return SignedLog(big.sign, big.log_mag + lib.log1p(lib.exp(diff)))
        if diff == 0:
            return SignedLog(0, -math.inf)
        return SignedLog(big.sign, big.log_mag + lib.log(-lib.expm1(diff)))

    def __sub__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        return self + (-other)

    def pow(self, k):
        """Integer power."""
        k = int(k)
        if self.sign == 0:
            if k <= 0:
                raise ZeroDivisionError("nonpositive power of zero")
            return self
        return SignedLog(self.sign ** (k % 2) if self.sign < 0 else 1, self.log_mag * k)


# ---------------------------------------------------------------------------
# sequences; generic over float and mpf inputs


def _tau(k, w, u):
    if k == -2:
        return 0 * w
    if k == -1:
        return (w - 1) * u + (1 + w) * u**3
    return (1 + k * w) * u**k - 2 * (1 + (k + 1) * w) * u**(k + 2) + (1 + (k + 2) * w) * u**(k + 4)


def _tau_star(k, w, u):
    if k < 0:
        return 0 * w
    return (1 + k * w) * u**k - (1 + w) * (1 + (k + 1) * w) * u**(k + 2)


def _tau_hat(k, w, u):
    if k == -2:
        return 2 * _tau(-1, w, u) * u
    if k == -1:
        return (1 + w) * u - 3 * (1 + w) * u**3 + 2 * (1 + 2 * w) * u**5
    return (1 + k * w) * u**k - 3 * (1 + (k + 2) * w) * u**(k + 4) + 2 * (1 + (k + 3) * w) * u**(k + 6)


def _tau_tilde(k, w, u):
    if k == -2:
        return _tau(-1, w, u) * u / 2
    if k == -1:
        return ((2 * w - 1) * u + (1 + 2 * w) * u**5) / 2
    return (2 * (1 + k * w) * u**k - 3 * (1 + (k + 1) * w) * u**(k + 2) + (1 + (k + 3) * w) * u**(k + 6)) / 2


_SEQ = {"tau": _tau, "tau_star": _tau_star, "tau_hat": _tau_hat, "tau_tilde": _tau_tilde}


def _r_entry(k, w, u):
    k = abs(k)
    return (1 + k * w) * u**k


def _resolve(precision, w):
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {precision!r}")
    if precision == "auto":
        return "wide" if w < CROSSOVER_W else "double"
    return precision


def _wide_wu(ctx):
    # u from the double w in wide arithmetic; the double u is off by ~1e-16,
    # which swamps the O(w^3) cancellations once w < ~1e-5
    w = _mp.mpf(ctx.w)
    return w, _mp.exp(-w)


def _wu(ctx, path):
    if path == "wide":
        return _wide_wu(ctx)
    return ctx.w, ctx.u


def tau_values(ctx, k, family="tau", precision="wide"):
    """Evaluate one of the four auxiliary sequences at index ``k >= -2``.

    Parameters
    ----------
    ctx : ScalarContext
    k : int
    family : {"tau", "tau_star", "tau_hat", "tau_tilde"}
    precision : {"wide", "double", "auto"}

    Returns
    -------
    float
    """
    if family not in _SEQ:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if int(k) != k or k < -2:
        raise ValueError(f"index must be an integer >= -2, got {k}")
    w, u = _wu(ctx, _resolve(precision, ctx.w))
    return float(_SEQ[family](int(k), w, u))


# ---------------------------------------------------------------------------
# per-axis scalars


@dataclass(frozen=True)
class RootPair:
    """Quadratic coefficients and roots driving the determinant."""

    a: float
    b: float
    a_tilde: float
    b_tilde: float
    alpha1: float
    alpha2: float
    disc: float


@dataclass(frozen=True)
class _Base:
    # all fields are wide mpf
    w: object
    u: object
    t1: object
    a: object
    b: object
    at: object
    bt: object
    B: object
    disc: object
    a1: object
    a2: object
    P1: object
    P2: object
    E1: object
    E2: object
    F1: object
    F2: object
    dd: object


def _base_scalars(w, u, sqrt, expm1):
    t1 = _tau(-1, w, u)
    a = 1 - 2 * u**2 + u**4 - 2 * u**2 * w + 2 * u**4 * w
    # b = 2u^2 - u^4 + w - u^4 w - 1 is O(w^4); from u^k - 1 it cancels O(w) terms, not O(1)
    b = 2 * expm1(-2 * w) - (1 + w) * expm1(-4 * w)
    at = 1 - u**2 - 2 * u**2 * w - u**2 * w**2
    bt = u**2 + w + u**2 * w - 1
    B = b + t1 * u
    lin = a - 2 * t1 * u
    disc = lin * lin - 4 * t1 * u * B
    if not disc > 0 or B == 0:
        raise NumericalPathError(f"degenerate discriminant {disc} at w={w}")
    sd = sqrt(disc)
    a1 = (-lin - sd) / (2 * B)
    a2 = (-lin + sd) / (2 * B)
    return t1, a, b, at, bt, B, disc, a1, a2


@lru_cache(maxsize=512)
def _base(ctx, precision="wide"):
    path = _resolve(precision, ctx.w)
    if path == "wide":
        w, u = _wide_wu(ctx)
        vals = _base_scalars(w, u, _mp.sqrt, _mp.expm1)
    else:
        vals = tuple(_mp.mpf(v) for v in _base_scalars(ctx.w, ctx.u, math.sqrt, math.expm1))
        w, u = _mp.mpf(ctx.w), _mp.mpf(ctx.u)
    t1, a, b, at, bt, B, disc, a1, a2 = vals
    u2 = u * u
    return _Base(
        w=w, u=u, t1=t1, a=a, b=b, at=at, bt=bt, B=B, disc=disc, a1=a1, a2=a2,
        P1=-B * a1, P2=-B * a2,
        E1=at * a1 + u2 * bt, E2=at * a2 + u2 * bt,
        F1=a * a1 + u2 * b, F2=a * a2 + u2 * b,
        dd=a1 - a2,
    )


def roots(ctx, precision="wide"):
    """Roots ``alpha1, alpha2`` and the polynomial coefficients around them.

    Returns
    -------
    RootPair
        ``alpha1`` is the root of larger magnitude. Fields are rounded to
        float64.

    Raises
    ------
    NumericalPathError
        If the discriminant is not positive.
    """
    b = _base(ctx, precision)
    return RootPair(a=float(b.a), b=float(b.b), a_tilde=float(b.at), b_tilde=float(b.bt),
                    alpha1=float(b.a1), alpha2=float(b.a2), disc=float(b.disc))


# ---------------------------------------------------------------------------
# boundary constants for the cofactor closed forms


@dataclass(frozen=True)
class AppendixBConstants:
    """The fourteen constants ``C[k, i]``, ``k = 1..7``, ``i = 1, 2``."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def as_array(self):
        return np.array([[self.values[k, i] for i in (1, 2)] for k in range(1, 8)])


@lru_cache(maxsize=512)
def _consts(ctx, precision="wide"):
    bs = _base(ctx, precision)
    w, u, t1, B = bs.w, bs.u, bs.t1, bs.B
    u2, u3, u4, u6 = u**2, u**3, u**4, u**6

    def th(k):
        return _tau_hat(k, w, u)

    def tt(k):
        return _tau_tilde(k, w, u)

    g26 = w * (2 - 6 * u2 + 4 * u4) + (1 - u2)**2
    g38 = w * (3 - 8 * u2 + 5 * u4) + (1 - u2)**2
    g14 = w * (1 - 4 * u2 + 3 * u4) + (1 - u2)**2
    s1 = (1 - u2)**2
    p6 = 2 - 3 * u2 + u6
    q6 = 1 - 3 * u4 + 2 * u6
    C = {}
    for idx, al in ((1, bs.a1), (2, bs.a2)):
        D = B * al - t1 * u
        if D == 0:
            raise NumericalPathError("vanishing boundary-constant denominator")
        C[1, idx] = (th(-2) * tt(0) * g26 / (t1 * u2 * D) + w * th(-2) * tt(0) * s1 / (u * D**2)
                     + (th(0) * tt(0) - th(1) * tt(-1)) / (t1 * u4)
                     - th(-2) * tt(-1) * g38 / (t1 * u * D) - w * th(-2) * tt(-1) * s1 / D**2)
        C[2, idx] = (w * th(-2) * p6 * g26 / (2 * t1 * u2 * D) + w**2 * th(-2) * p6 * s1 / (2 * u * D**2)
                     + w * th(0) * p6 / (2 * t1 * u4) - w * s1 * th(-2) * tt(-1) / (t1 * u * D)
                     - w * q6 * tt(-1) / (t1 * u3))
        C[3, idx] = th(-1) + th(-2) * u * g14 / D + w * t1 * u2 * th(-2) * s1 / D**2
        C[4, idx] = (th(-1) * tt(0) / (t1 * u4) + th(-2) * tt(0) * g14 / (t1 * u3 * D)
                     + w * th(-2) * tt(0) * s1 / (u2 * D**2)
                     - th(1) * tt(-2) / (t1 * u4) - th(-2) * tt(-2) * g38 / (t1 * u * D)
                     - w * th(-2) * tt(-2) * s1 / D**2)
        C[5, idx] = (w * th(-1) * p6 / (2 * t1 * u4) + w * th(-2) * p6 * g14 / (2 * t1 * u3 * D)
                     + w**2 * th(-2) * p6 * s1 / (2 * u2 * D**2) - w * th(-2) * tt(-2) * s1 / (t1 * u * D)
                     - w * q6 * tt(-2) / (t1 * u3))
        C[6, idx] = (th(-1) * tt(-1) - th(0) * tt(-2) + th(-2) * u * tt(-1) * g14 / D
                     - th(-2) * tt(-2) * u2 * g26 / D
                     + w * t1 * u2 * th(-2) * (tt(-1) - u * tt(-2)) * s1 / D**2)
        C[7, idx] = th(-2) * u2 * g26 / D + w * t1 * th(-2) * u3 * s1 / D**2 + th(0)
    return C


def appendix_b_constants(ctx, precision="wide"):
    """Boundary constants used by the interior cofactor closed forms.

    Returns
    -------
    AppendixBConstants
        Float64 values keyed by ``(k, i)``.
    """
    C = _consts(ctx, precision)
    out = {}
    for key, v in C.items():
        fv = float(v)
        if not math.isfinite(fv):
            raise NumericalPathError(f"constant C{key} is not finite")
        out[key] = fv
    return AppendixBConstants(out)


# ---------------------------------------------------------------------------
# determinant


def _det_wide(bs, m):
    # |R_m| in the wide context
    if m == 1:
        return _mp.mpf(1)
    return (bs.E1 * bs.P1**(m - 2) - bs.E2 * bs.P2**(m - 2)) / bs.dd


def logdet_closed(ctx, precision="wide"):
    """Log-determinant of the ``n x n`` correlation matrix from the roots.

    Evaluated as ``(n-2) log|P1| + log|E1 - E2 (alpha2/alpha1)^(n-2)| -
    log|alpha1 - alpha2|`` with ``P1 = -(b + tau(-1) u) alpha1`` and
    ``E_l = a_tilde alpha_l + u^2 b_tilde``.

    Returns
    -------
    SignedLog
        Sign is +1 for every valid input; ``log_mag`` is a wide mpf.
    """
    n = ctx.n
    if n < 2:
        raise ValueError("n must be >= 2")
    bs = _base(ctx, precision)
    r = bs.a2 / bs.a1
    head = SignedLog.from_value(bs.P1).pow(n - 2)
    body = SignedLog.from_value(bs.E1 - bs.E2 * r**(n - 2))
    return head * body / SignedLog.from_value(bs.dd)


def logdet_recurrence(ctx, m=None):
    """Log-determinant of the leading ``m x m`` block by the banded recurrence.

    ``|R_m| = (-1)^m tau_star(m-2) tau(-1)^(m-2)
    + sum_{k=0}^{m-3} (-1)^k tau(k) |R_{m-k-1}| tau(-1)^k`` with ``|R_1| = 1``.
    The wide context has an unbounded exponent, so no rescaling is needed
    between steps. Cost is O(m^2).
    """
    n = ctx.n
    m = n if m is None else int(m)
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= n={n}, got {m}")
    w, u = _wide_wu(ctx)
    t1 = _tau(-1, w, u)
    taus = [_tau(k, w, u) for k in range(max(m - 2, 0))]
    t1p = [_mp.mpf(1)]
    for _ in range(m):
        t1p.append(t1p[-1] * t1)
    D = [None, _mp.mpf(1)]
    for mm in range(2, m + 1):
        s = (-1) ** (mm - 2) * _tau_star(mm - 2, w, u) * t1p[mm - 2]
        for k in range(mm - 2):
            s += (-1) ** k * taus[k] * D[mm - k - 1] * t1p[k]
        D.append(s)
    return SignedLog.from_value(D[m])


# ---------------------------------------------------------------------------
# cofactors


def canonical_index(i, j, n):
    """Map ``(i, j)`` into ``i <= j, i + j >= n + 1`` using symmetry and persymmetry."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"index ({i}, {j}) out of range for n={n}")
    if i > j:
        i, j = j, i
    if i + j < n + 1:
        i, j = n - j + 1, n - i + 1
    return i, j


def cofactor_family(i, j, n):
    """Closed-form family for a canonical cell, or ``"recurrence"``.

    Families: ``"det"`` (cell (n, n)), ``"first_row"`` (1, n),
    ``"second_row"`` (2, n-1|n), ``"edge_diag"`` / ``"edge_offdiag"``
    (i = n-1), ``"diag"`` / ``"offdiag"`` (3 <= i <= n-2, j in {i, i+1}),
    ``"last_col"`` (j = n), ``"band"`` (i + 2 <= j <= n-1).
    """
    if i == n and j == n:
        return "det"
    if i == 1:
        return "first_row" if (n >= 3 and j == n) else "recurrence"
    if i == 2:
        return "second_row" if (j >= 4 and j >= n - 1) else "recurrence"
    if j == i:
        return "edge_diag" if i == n - 1 else "diag"
    if j == i + 1:
        return "edge_offdiag" if i == n - 1 else "offdiag"
    if j == n:
        return "last_col"
    return "band"


def _atilde(bs, m):
    if m == 0:
        return _mp.mpf(1)
    a1, a2 = bs.a1, bs.a2
    return ((-1) ** (m + 1) * bs.B**(m - 1)
            * (bs.a * (a1**m - a2**m) + bs.u**2 * bs.b * (a1**(m - 1) - a2**(m - 1))) / bs.dd)


def _second_row_factor(bs):
    w, u = bs.w, bs.u
    return (_tau_tilde(-2, w, u) * ((1 + 2 * w)**2 * u**4 - 1)
            + _tau_tilde(-1, w, u) * _tau_star(1, w, u))


def _cofactor_closed_wide(ctx, i, j, precision):
    """Wide value of the minor ``|R_{-i,-j}|`` at a canonical cell, or None."""
    n = ctx.n
    fam = cofactor_family(i, j, n)
    if fam == "recurrence":
        return None, fam
    bs = _base(ctx, precision)
    if fam == "det":
        return _det_wide(bs, n - 1), fam
    t1, u, w = bs.t1, bs.u, bs.w
    if fam == "first_row":
        return w**2 * u**2 * t1**(n - 3), fam
    if fam == "second_row":
        return t1**(j - 4) * _second_row_factor(bs) * _atilde(bs, n - j), fam
    C = _consts(ctx, precision)
    P1, P2, E1, E2, F1, F2, dd = bs.P1, bs.P2, bs.E1, bs.E2, bs.F1, bs.F2, bs.dd
    a1, a2 = bs.a1, bs.a2
    m = n - 1
    if fam in ("edge_diag", "edge_offdiag"):
        k = 7 if fam == "edge_diag" else 3
        return (C[k, 1] * E1 * P1**(i - 3) - C[k, 2] * E2 * P2**(i - 3)) / dd, fam
    if fam in ("diag", "offdiag"):
        c1, c2 = (1, 2) if fam == "diag" else (4, 5)
        K = t1 * u**4 / dd**2
        K2 = t1 * u**6 / dd**2
        v = (C[c1, 1] * K * E1 * ((a1 - u**2) * P1**(m - 4) - (a2 - u**2) * P1**(i - 3) * P2**(m - i - 1))
             - C[c1, 2] * K * E2 * ((a1 - u**2) * P1**(m - i - 1) * P2**(i - 3) - (a2 - u**2) * P2**(m - 4))
             + C[c2, 1] * K2 * E1 * (P1**(m - 4) - P1**(i - 3) * P2**(m - i - 1))
             - C[c2, 2] * K2 * E2 * (P1**(m - i - 1) * P2**(i - 3) - P2**(m - 4)))
        return v, fam
    if fam == "last_col":
        return t1**(n - i - 2) * (C[6, 1] * E1 * P1**(i - 3) - C[6, 2] * E2 * P2**(i - 3)) / dd, fam
    v = t1**(j - i - 2) / dd**2 * (C[6, 1] * E1 * (F1 * P1**(n - j + i - 4) - F2 * P1**(i - 3) * P2**(n - j - 1))
                                   - C[6, 2] * E2 * (F1 * P1**(n - j - 1) * P2**(i - 3) - F2 * P2**(n - j + i - 4)))
    return v, fam


def cofactor_closed(ctx, i, j, precision="wide"):
    """Minor ``|R_{-i,-j}|`` (row ``i`` and column ``j`` deleted), closed form.

    The cell is first canonicalized, then dispatched per
    :func:`cofactor_family`. Cells with no closed form fall back to
    :func:`cofactor_recurrence`.

    Returns
    -------
    SignedLog
        Signed minor; the checkerboard sign ``(-1)^(i+j)`` is not applied.
    """
    n = ctx.n
    ci, cj = canonical_index(i, j, n)
    v, fam = _cofactor_closed_wide(ctx, ci, cj, precision)
    if v is None:
        return cofactor_recurrence(ctx, ci, cj)
    return SignedLog.from_value(v)


def _hessenberg_table(ctx, i, j):
    """Reduced upper Hessenberg matrix of order n-1 for canonical (i, j).

    Returned as a dict keyed by 1-based ``(row, col)``; zero cells omitted.
    """
    n = ctx.n
    N = n - 1
    w, u = _wide_wu(ctx)
    tau = {k: _tau(k, w, u) for k in range(-2, n + 1)}
    rr = {k: _r_entry(k, w, u) for k in range(-n - 1, n + 2)}
    H = {}
    for k in range(1, N + 1):
        for c in range(max(1, k - 1), N + 1):
            s = 0 if c <= j - 1 else 1  # columns at or past j shift by one
            if i == 1:
                H[k, c] = rr[c - k - 1 + s] if k <= 2 else tau[c - k - 1 + s]
            elif i == 2:
                if k == 1:
                    H[k, c] = rr[c - 1 + s]
                elif k == 2:
                    H[k, c] = rr[c - 3 + s]
                elif k == 3:
                    H[k, c] = _tau_tilde(c - 4 + s, w, u)
                else:
                    H[k, c] = tau[c - k - 1 + s]
            else:
                if k <= 2:
                    H[k, c] = rr[c - k + s]
                elif k <= i - 1:
                    H[k, c] = tau[c - k + s]
                elif k == i:
                    H[k, c] = _tau_hat(c - i - 1 + s, w, u)
                elif k == i + 1:
                    H[k, c] = _tau_tilde(c - i - 2 + s, w, u)
                else:
                    H[k, c] = tau[c - k - 1 + s]
    return H, N


def _hessenberg_det(H, N):
    # |H_m| = sum_k (-1)^k H[m-k, m] |H_{m-k-1}| prod_{l<k} H[m-l, m-l-1]
    D = [_mp.mpf(1)]
    for m in range(1, N + 1):
        s = _mp.mpf(0)
        prod = _mp.mpf(1)
        for k in range(m):
            s += (-1) ** k * H[m - k, m] * D[m - k - 1] * prod
            if m - k - 1 < 1:
                break
            prod *= H[m - k, m - k - 1]
            if prod == 0:
                break
        D.append(s)
    return D[N]


def cofactor_recurrence(ctx, i, j):
    """Minor ``|R_{-i,-j}|`` from the upper Hessenberg recurrence.

    Exact in the wide context; O(n^2) per cell.

    Returns
    -------
    SignedLog
    """
    n = ctx.n
    ci, cj = canonical_index(i, j, n)
    if n == 1:
        return SignedLog(1, 0.0)
    H, N = _hessenberg_table(ctx, ci, cj)
    return SignedLog.from_value(_hessenberg_det(H, N))


# ---------------------------------------------------------------------------
# inverse


def inverse_entry(ctx, i, j, precision="wide"):
    """Entry ``(i, j)`` of the inverse correlation matrix.

    ``(-1)^(i+j) |R_{-i,-j}| / |R|`` with both factors in signed log form.
    """
    n = ctx.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"index ({i}, {j}) out of range for n={n}")
    cof = cofactor_closed(ctx, i, j, precision)
    det = logdet_closed(ctx, precision)
    q = cof / det
    if (i + j) % 2:
        q = -q
    return q.value()


def _canonical_cells(n):
    I, J = [], []
    for i in range(1, n + 1):
        for j in range(max(i, n + 1 - i), n + 1):
            I.append(i)
            J.append(j)
    return np.array(I), np.array(J)


def _fill(out, I, J, vals, n):
    # write a canonical cell and its symmetric / persymmetric images
    out[I - 1, J - 1] = vals
    out[J - 1, I - 1] = vals
    out[n - J, n - I] = vals
    out[n - I, n - J] = vals


def inverse_matrix(ctx, precision="wide"):
    """Dense inverse of the ``n x n`` correlation matrix from closed forms.

    Every entry is a cofactor divided by the determinant. In the interior
    families the common powers of ``P1`` are cancelled before rounding,
    so each entry reduces to an O(1)-sized combination of powers of
    ``tau(-1)/P1`` and ``alpha2/alpha1``. Those combinations are evaluated
    vectorized in float64 with wide-precision coefficients. The remaining
    boundary cells go through :func:`inverse_entry`.
    """
    n = ctx.n
    if n < 2:
        raise ValueError("n must be >= 2")
    out = np.empty((n, n))
    I, J = _canonical_cells(n)
    fams = np.array([cofactor_family(i, j, n) for i, j in zip(I, J)])
    vec = np.isin(fams, ("diag", "offdiag", "last_col", "band"))
    for i, j in zip(I[~vec], J[~vec]):
        v = inverse_entry(ctx, int(i), int(j), precision)
        _fill(out, np.array([i]), np.array([j]), v, n)
    if not vec.any():
        return out

    bs = _base(ctx, precision)
    C = _consts(ctx, precision)
    P1, E1, E2, F1, F2, dd = bs.P1, bs.E1, bs.E2, bs.F1, bs.F2, bs.dd
    a1, a2, u, t1 = bs.a1, bs.a2, bs.u, bs.t1
    r_w = bs.a2 / bs.a1
    e = E2 / E1
    Q = 1 / (1 - e * r_w**(n - 2))
    r = float(r_w)
    s = float(t1 / P1)
    P13 = P1**3

    def rp(k):
        return np.power(r, k)

    # diagonal and first off-diagonal, 3 <= i <= n-2
    for fam, c1, c2, sgn in (("diag", 1, 2, 1.0), ("offdiag", 4, 5, -1.0)):
        mask = fams == fam
        if not mask.any():
            continue
        i = I[mask]
        K = t1 * u**4 / dd
        K2 = t1 * u**6 / dd
        A0 = float(Q * (C[c1, 1] * K * (a1 - u**2) + C[c2, 1] * K2) / P13)
        A1 = float(-Q * (C[c1, 1] * K * (a2 - u**2) + C[c2, 1] * K2) / P13)
        A2 = float(-Q * e * (C[c1, 2] * K * (a1 - u**2) + C[c2, 2] * K2) / P13)
        A3 = float(Q * e * (C[c1, 2] * K * (a2 - u**2) + C[c2, 2] * K2) / P13)
        vals = sgn * (A0 + A1 * rp(n - i - 2) + A2 * rp(i - 3) + A3 * rp(n - 5))
        _fill(out, i, J[mask], vals, n)

    mask = fams == "last_col"
    if mask.any():
        i = I[mask]
        B0 = float(Q * C[6, 1] / P13)
        B1 = float(-Q * C[6, 2] * e / P13)
        sign = np.where((n + i) % 2 == 0, 1.0, -1.0)
        vals = sign * np.power(s, n - i - 2) * (B0 + B1 * rp(i - 3))
        _fill(out, i, J[mask], vals, n)

    mask = fams == "band"
    if mask.any():
        i, j = I[mask], J[mask]
        den = dd * P1**4
        G0 = float(Q * C[6, 1] * F1 / den)
        G1 = float(-Q * C[6, 1] * F2 / den)
        G2 = float(-Q * C[6, 2] * e * F1 / den)
        G3 = float(Q * C[6, 2] * e * F2 / den)
        sign = np.where((i + j) % 2 == 0, 1.0, -1.0)
        vals = sign * np.power(s, j - i - 2) * (G0 + G1 * rp(n - j - 1) + G2 * rp(i - 3)
                                               + G3 * rp(n - j + i - 4))
        _fill(out, i, j, vals, n)
    return out

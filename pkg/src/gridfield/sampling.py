"""Exact simulation of lattice fields through per-axis Cholesky factors.

A draw is ``sqrt(prefactor) * (L_1 x ... x L_d) z`` with ``z`` i.i.d. standard
normal. The Kronecker product of the factors is applied by mode products.

Random streams: replication ``stream_id`` under ``master_seed`` uses a Philox
counter-based bit generator keyed by ``SeedSequence(master_seed,
spawn_key=(stream_id,))``. Normals come from numpy's ziggurat transform of
that stream. Identical ``(master_seed, stream_id)`` gives identical fields on
one platform, and no state is shared between replications.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernel import GridSpec, ScalarContext, corr_matrix, log_variance_prefactor
from .likelihood import LatticeField, mode_product

MAX_SEED = 2**64


@dataclass(frozen=True)
class SeededStream:
    """Deterministic normal stream for one replication."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v < MAX_SEED:
                raise ValueError(f"{name} must be an integer in [0, 2^64), got {v}")
            object.__setattr__(self, name, int(v))

    def generator(self):
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


class FactorizationError(np.linalg.LinAlgError):
    pass


@lru_cache(maxsize=64)
def _axis_cholesky(ctx):
    R = corr_matrix(ctx)
    try:
        return np.linalg.cholesky(R), 0.0
    except np.linalg.LinAlgError:
        pass
    # R is SPD in exact arithmetic; retry once with a tiny diagonal shift
    jitter = 1e-12 * ctx.n
    try:
        return np.linalg.cholesky(R + jitter * np.eye(ctx.n)), jitter
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky failed for theta={ctx.theta}, n={ctx.n}") from exc


def axis_cholesky(ctx, return_jitter=False):
    """Lower Cholesky factor of the one-axis correlation matrix.

    No jitter is added unless the first factorization fails. In that case
    ``1e-12 n`` is added to the diagonal and the factorization is retried
    once. The jitter used is returned when ``return_jitter`` is set.
    """
    if ctx.n < 2:
        raise ValueError("n must be >= 2")
    L, jitter = _axis_cholesky(ctx)
    L = L.copy()
    return (L, jitter) if return_jitter else L


def sample_field(params, grid, stream):
    """Draw one field exactly from the lattice Gaussian distribution."""
    if not isinstance(stream, SeededStream):
        raise TypeError("stream must be a SeededStream")
    if params.d != grid.d:
        raise ValueError(f"params have d={params.d}, grid has d={grid.d}")
    z = stream.generator().standard_normal(grid.size).reshape(grid.shape)
    jitters = []
    Y = z
    for axis, theta in enumerate(params.thetas):
        L, jit = _axis_cholesky(ScalarContext(theta, grid.n))
        jitters.append(jit)
        Y = mode_product(Y, L, axis)
    scale = math.exp(0.5 * log_variance_prefactor(params))
    meta = {"phi": params.phi, "theta": list(params.thetas), "seed": stream.master_seed,
            "stream": stream.stream_id, "jitter": jitters, "ordering": "lexicographic-ascending"}
    return LatticeField(scale * Y.ravel(), grid, meta)


def sample_fields(params, n, reps, master_seed, start=0):
    """Fields for replications ``start .. start+reps-1`` under one master seed."""
    grid = GridSpec(n, params.d)
    return [sample_field(params, grid, SeededStream(master_seed, r)) for r in range(start, start + reps)]

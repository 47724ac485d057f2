"""Seeded synthetic low-rank + sparse benchmark problems."""

from dataclasses import dataclass

import numpy as np

from . import multilevel
from .cpcp import ObservationMask


@dataclass
class SyntheticProblem:
    """Ground-truth decomposition with the observed data built from it.

    ``d`` equals ``l_truth + s_truth`` projected onto the mask (identity when
    ``mask`` is None).  The low-rank part has exact rank ``rank``; the sparse
    part has at most ``eta * m * n`` nonzeros.
    """

    d: np.ndarray
    l_truth: np.ndarray
    s_truth: np.ndarray
    mask: ObservationMask | None
    rank: int
    eta: float
    seed: int


def _orthonormal(rng, rows, cols):
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def _sparse_part(rng, m, n, eta):
    s = np.zeros((m, n))
    count = int(np.floor(eta * m * n))
    if count:
        pos = rng.choice(m * n, size=count, replace=False)
        s.flat[pos] = rng.uniform(-1.0, 1.0, size=count)
    return s


def _assemble(l, rng, m, n, eta, observe_fraction, rank, seed):
    s = _sparse_part(rng, m, n, eta)
    mask = None
    d = l + s
    if observe_fraction is not None:
        mask = ObservationMask.random(m, n, observe_fraction, rng)
        d = mask.project(d)
    return SyntheticProblem(d=d, l_truth=l, s_truth=s, mask=mask,
                            rank=rank, eta=eta, seed=seed)


def synth_rpca(m, n, rank, eta, seed, observe_fraction=None):
    """Random instance whose low-rank spectrum decays as ``1/k^2``.

    The low-rank part is ``sum_k (1/k^2) u_k v_k^T`` with orthonormalised
    Gaussian factors, so its singular values are exactly ``1, 1/4, 1/9, ...``.
    Sparse corruptions are uniform on ``[-1, 1]`` at ``floor(eta*m*n)``
    uniformly random positions.  Identical seeds give bit-identical problems.
    """
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must lie in [1, {min(m, n)}], got {rank}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    rng = np.random.default_rng(seed)
    u = _orthonormal(rng, m, rank)
    v = _orthonormal(rng, n, rank)
    weights = 1.0 / (np.arange(1, rank + 1) ** 2)
    l = (u * weights) @ v.T
    return _assemble(l, rng, m, n, eta, observe_fraction, rank, seed)


def synth_rpca_coarse(m, n, coarse_cols, rank, eta, seed,
                      observe_fraction=None, scale=None):
    """Instance whose low-rank truth factors exactly through a restriction.

    The truth is ``L_H @ R.T`` for a rank-``rank`` coarse matrix and the
    normalized chain from ``n`` down to ``coarse_cols``, so a multilevel
    solver using that chain can represent it without approximation error.
    The coarse spectrum decays as ``scale / k^2``; by default ``scale`` is
    chosen so the low-rank part has Frobenius norm comparable to the sparse
    part (as in real frame stacks, where the background carries most of the
    energy).
    """
    if not 1 <= rank <= min(m, coarse_cols):
        raise ValueError(f"rank must lie in [1, {min(m, coarse_cols)}], got {rank}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if scale is None:
        # ||S||_F^2 ~ eta*m*n*E[u^2] for uniform [-1, 1] corruption values
        scale = max(1.0, np.sqrt(eta * m * n / 3.0))
    chain = multilevel.build_chain(n, coarse_cols, normalize=True)
    rng = np.random.default_rng(seed)
    u = _orthonormal(rng, m, rank)
    v = _orthonormal(rng, coarse_cols, rank)
    weights = scale / (np.arange(1, rank + 1) ** 2)
    l_h = (u * weights) @ v.T
    l = multilevel.prolong(l_h, chain)
    return _assemble(l, rng, m, n, eta, observe_fraction, rank, seed)

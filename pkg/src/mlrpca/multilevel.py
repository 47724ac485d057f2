"""Coarse-grid restriction operators for column-space reduction.

A restriction chain maps an ``m x n`` matrix to an ``m x n_H`` one by right
multiplication with a sparse interpolation operator ``R`` (and back with its
transpose).  Solvers run their SVD steps on the restricted matrices, which is
what makes the multilevel variants cheap per iteration.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linalg import as_matrix, svd_full


class LevelError(ValueError):
    """No coarse level satisfies the requested constraints."""


def build_interpolation(n):
    """One-level interpolation factor of shape ``(n, ceil(n/2))``.

    Each coarse column injects with weight 1 into its aligned fine rows and
    with weight 1/2 into the boundary rows it shares with its neighbours, so
    every fine row sums to exactly 1.  For odd ``n`` the trailing coarse
    column is a weight-1 injection into the final fine row.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"fine size must be >= 2, got {n}")
    n_h = (n + 1) // 2
    rows, cols, vals = [], [], []

    def put(i, j, w):
        rows.append(i)
        cols.append(j)
        vals.append(w)

    last_regular = n_h - 1 if n % 2 == 0 else n_h - 2
    for j in range(last_regular + 1):
        if j == 0:
            stencil = [(0, 1.0), (1, 1.0), (2, 0.5)]
        elif j == n_h - 1:  # even n only
            stencil = [(n - 2, 0.5), (n - 1, 1.0)]
        else:
            stencil = [(2 * j, 0.5), (2 * j + 1, 1.0), (2 * j + 2, 0.5)]
        for i, w in stencil:
            if i >= n or (n % 2 == 1 and i == n - 1):
                continue  # final row is reserved for the odd-size column
            put(i, j, w)
    if n % 2 == 1:
        put(n - 1, n_h - 1, 1.0)

    return sp.csr_array((vals, (rows, cols)), shape=(n, n_h))


def coarse_sizes(n):
    """Sizes reachable from ``n`` by repeated halving, including ``n`` itself."""
    sizes = [int(n)]
    while sizes[-1] > 1:
        sizes.append((sizes[-1] + 1) // 2)
    return sizes


@dataclass
class RestrictionChain:
    """Composed interpolation operator from ``n_fine`` down to ``n_coarse``.

    ``composite`` is the operator actually applied by :func:`restrict` and
    :func:`prolong`; when ``normalized`` it is the raw row-stochastic product
    scaled by ``1/spectral_norm`` so that its largest singular value is 1.
    Both versions are kept because row sums of 1 (constant-column
    preservation) only hold for the raw operator.  Instances are immutable by
    convention; all applications are pure.
    """

    levels: list
    n_fine: int
    n_coarse: int
    composite: sp.csr_array
    raw_composite: sp.csr_array
    spectral_norm: float
    normalized: bool
    _sigmas: np.ndarray | None = field(default=None, repr=False)
    _gram_cho: tuple | None = field(default=None, repr=False)

    def composite_sigmas(self):
        """All singular values of the active composite (cached)."""
        if self._sigmas is None:
            s = np.linalg.svd(self.composite.toarray(), compute_uv=False)
            object.__setattr__(self, "_sigmas", s)
        return self._sigmas

    def gram_cho(self):
        """Cholesky factorization of ``R.T @ R`` (cached)."""
        if self._gram_cho is None:
            gram = (self.composite.T @ self.composite).toarray()
            object.__setattr__(self, "_gram_cho", scipy.linalg.cho_factor(gram))
        return self._gram_cho


@dataclass
class MultilevelDiagnostics:
    """Monitors from the coarse-approximation analysis.

    ``epsilon`` bounds how much nuclear norm the prolongation can lose;
    ``delta_history`` tracks the per-iteration alignment error of the coarse
    iterate against a reference, whose positive part controls the feasibility
    plateau of the multilevel solver.
    """

    epsilon: float
    delta_history: list

    @property
    def delta_max(self):
        if not self.delta_history:
            return 0.0
        return float(max(0.0, max(self.delta_history)))


def build_chain(n, n_coarse_target, normalize=True):
    """Compose interpolation factors from ``n`` down to ``n_coarse_target``.

    The target must be reachable from ``n`` by repeated halving (``n`` itself
    gives the identity chain).  When ``normalize`` is set the composite is
    divided by its exact largest singular value.
    """
    n = int(n)
    target = int(n_coarse_target)
    if n < 1 or target < 1:
        raise ValueError("sizes must be positive")
    sizes = coarse_sizes(n)
    if target not in sizes:
        below = [s for s in sizes if s < target]
        above = [s for s in sizes if s > target]
        near = []
        if above:
            near.append(str(min(above)))
        if below:
            near.append(str(max(below)))
        raise ValueError(
            f"coarse size {target} is not reachable from {n} by repeated "
            f"halving; nearest reachable sizes: {' and '.join(near)}"
        )
    levels = []
    size = n
    while size > target:
        levels.append(build_interpolation(size))
        size = (size + 1) // 2

    raw = sp.identity(n, format="csr")
    raw = sp.csr_array(raw)
    for factor in levels:
        raw = sp.csr_array(raw @ factor)

    # sigma_1 via the small coarse-side Gram matrix; exact to machine
    # precision, which the normalization invariant (sigma_1 = 1 +- 1e-10)
    # requires.
    gram = (raw.T @ raw).toarray()
    spectral = float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))
    if normalize:
        if spectral == 0.0:
            raise ValueError("composite operator is zero; cannot normalize")
        composite = sp.csr_array(raw / spectral)
    else:
        composite = raw
    return RestrictionChain(
        levels=levels,
        n_fine=n,
        n_coarse=target,
        composite=composite,
        raw_composite=raw,
        spectral_norm=spectral,
        normalized=bool(normalize),
    )


def select_levels(n, rank_guess, r_needed, m):
    """Deepest halving-reachable coarse size compatible with the rank bounds.

    Returns the smallest reachable ``n_H`` with
    ``n_H > max(rank_guess, r_needed)``.  The returned level should also
    satisfy ``n_H <= (m + 1) / 2``; when no level does, the deepest valid one
    is returned with a warning, since that bound can then only be violated.
    """
    n, m = int(n), int(m)
    rank_guess, r_needed = int(rank_guess), int(r_needed)
    if rank_guess < 1 or m < 1:
        raise ValueError("rank_guess and m must be positive")
    floor = max(rank_guess, r_needed)
    candidates = [s for s in coarse_sizes(n) if s > floor]
    if not candidates:
        raise LevelError(
            f"no coarse level reachable from n={n} satisfies "
            f"n_H > max(rank_guess, r_needed) = {floor}"
        )
    deepest = min(candidates)
    if deepest > (m + 1) / 2:
        warnings.warn(
            f"coarse size {deepest} violates n_H <= (m+1)/2 = {(m + 1) / 2}; "
            "the rank bound cannot be certified for this problem",
            RuntimeWarning,
            stacklevel=2,
        )
    return deepest


def restrict(x, chain):
    """Right-multiply by the composite: ``(m, n_fine) -> (m, n_coarse)``."""
    x = as_matrix(x)
    if x.shape[1] != chain.n_fine:
        raise ValueError(
            f"matrix has {x.shape[1]} columns, chain expects {chain.n_fine}"
        )
    return x @ chain.composite


def restrict_least_squares(x, chain):
    """Least-squares coarse representation: argmin over X_H of
    ``||X - X_H @ R.T||_F``, i.e. ``X @ R @ (R.T R)^-1``.

    Unlike :func:`restrict`, composing this with :func:`prolong` is the exact
    orthogonal projection onto the prolongation range, so matrices that
    factor through the chain pass through unchanged.
    """
    x = as_matrix(x)
    if x.shape[1] != chain.n_fine:
        raise ValueError(
            f"matrix has {x.shape[1]} columns, chain expects {chain.n_fine}"
        )
    return scipy.linalg.cho_solve(chain.gram_cho(), (x @ chain.composite).T).T


def prolong(x_h, chain):
    """Right-multiply by the transpose: ``(m, n_coarse) -> (m, n_fine)``."""
    x_h = as_matrix(x_h)
    if x_h.shape[1] != chain.n_coarse:
        raise ValueError(
            f"matrix has {x_h.shape[1]} columns, chain expects {chain.n_coarse}"
        )
    return x_h @ chain.composite.T


def epsilon_bound(l_h, chain):
    """Nuclear-norm slack of prolongation:
    ``sum_k sigma_k(L_H) * (1 - sigma_{n_H-k+1}(R))`` over ``k <= rank(L_H)``.

    Prolonging ``L_H`` through the chain loses at most this much nuclear norm.
    """
    l_h = as_matrix(l_h)
    if l_h.shape[1] != chain.n_coarse:
        raise ValueError(
            f"matrix has {l_h.shape[1]} columns, chain expects {chain.n_coarse}"
        )
    s_l = svd_full(l_h).sigma
    r_h = int(np.count_nonzero(s_l > s_l[0] * max(l_h.shape) * np.finfo(float).eps))
    if r_h == 0:
        return 0.0
    s_r = chain.composite_sigmas()
    # k-th largest of L_H pairs with the k-th smallest of R
    return float(np.sum(s_l[:r_h] * (1.0 - s_r[::-1][:r_h])))

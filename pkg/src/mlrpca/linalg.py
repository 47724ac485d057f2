"""Dense matrix primitives: norms, thresholding operators, full/truncated SVD.

All matrices are 2-D float64 numpy arrays.  Every public function validates
its input, returns freshly allocated output, and never mutates arguments, so
results can be shared freely across threads.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

# Above this size the truncated path switches from dense LAPACK
# bidiagonalization to Lanczos iteration with reorthogonalization (ARPACK).
DENSE_SVD_LIMIT = 256


class SvdError(RuntimeError):
    """SVD iteration failed to converge.

    Attributes
    ----------
    iterations : int or None
        Number of iterations attempted when known (Lanczos path), else None.
    """

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class SvdFactors(NamedTuple):
    """Thin SVD: ``x ~ u @ diag(sigma) @ v.T`` with orthonormal u, v columns."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


class MatrixNorms(NamedTuple):
    nuclear: float
    l1: float
    frobenius: float
    spectral: float


def as_matrix(x, name="x"):
    """Validate and return ``x`` as a finite 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def soft_threshold(x, tau):
    """Entrywise shrinkage ``sign(x) * max(|x| - tau, 0)``.

    This is the proximal operator of ``tau * ||.||_1``; ``tau`` must be
    nonnegative.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    out = np.abs(x)
    out -= tau
    np.maximum(out, 0.0, out=out)
    return np.copysign(out, x, out=out)


def _fix_signs(u, v):
    # Deterministic sign convention: largest-magnitude entry of each u column
    # is positive; the paired v column flips with it.
    if u.shape[1] == 0:
        return u, v
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def svd_full(x):
    """Thin SVD with all ``min(m, n)`` triplets, singular values descending."""
    x = as_matrix(x)
    try:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower gesvd succeeds.
        try:
            u, s, vt = scipy.linalg.svd(x, full_matrices=False,
                                        lapack_driver="gesvd")
        except Exception as exc:
            raise SvdError(f"SVD did not converge on {x.shape} input: {exc}") from exc
    u, v = _fix_signs(u, vt.T)
    return SvdFactors(u, s, v)


def svd_truncated(x, r):
    """Leading ``r`` singular triplets of ``x``.

    Uses dense LAPACK when ``min(m, n) <= DENSE_SVD_LIMIT`` or when ``r`` is
    not strictly smaller than ``min(m, n)``; otherwise Lanczos iteration with
    reorthogonalization (ARPACK), with a deterministic starting vector.
    """
    x = as_matrix(x)
    k = min(x.shape)
    r = int(r)
    if not 1 <= r <= k:
        raise ValueError(f"rank must satisfy 1 <= r <= {k}, got {r}")
    if k <= DENSE_SVD_LIMIT or r >= k:
        u, s, v = svd_full(x)
        return SvdFactors(u[:, :r], s[:r], v[:, :r])
    v0 = np.ones(min(x.shape))
    try:
        u, s, vt = scipy.sparse.linalg.svds(x, k=r, v0=v0)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise SvdError(f"Lanczos SVD did not converge for k={r} on {x.shape}",
                       iterations=getattr(exc, "maxiter", None)) from exc
    order = np.argsort(s)[::-1]
    u, v = _fix_signs(u[:, order], vt[order].T)
    return SvdFactors(u, s[order], v)


def svt(x, tau):
    """Singular value thresholding: soft-threshold the spectrum of ``x``.

    Returns ``(z, rank)`` where ``z = u @ diag(max(sigma - tau, 0)) @ v.T``
    and ``rank`` counts singular values strictly greater than ``tau`` (ties
    at ``sigma == tau`` shrink to exactly zero and are not counted).
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    u, s, v = svd_full(x)
    rank = int(np.count_nonzero(s > tau))
    if rank == 0:
        return np.zeros_like(np.asarray(x, dtype=np.float64)), 0
    s_shrunk = s[:rank] - tau
    return (u[:, :rank] * s_shrunk) @ v[:, :rank].T, rank


def norms(x):
    """All four norms used by the solvers: nuclear, l1, Frobenius, spectral."""
    x = as_matrix(x)
    s = np.linalg.svd(x, compute_uv=False)
    return MatrixNorms(
        nuclear=float(np.sum(s)),
        l1=float(np.sum(np.abs(x))),
        frobenius=float(np.linalg.norm(x, "fro")),
        spectral=float(s[0]),
    )

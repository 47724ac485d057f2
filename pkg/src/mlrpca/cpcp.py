"""Frank-Wolfe thresholding solvers for compressive principal component
pursuit.

The problem is the penalised, partially observed decomposition
``min 0.5 * ||P[L + S - D]||_F^2 + lam_l * ||L||_* + lam_s * ||S||_1`` where
``P`` zeroes unobserved entries.  It is solved on its epigraph form over the
box-bounded feasible set ``||L||_* <= t_l <= u_l``, ``||S||_1 <= t_s <= u_s``
with conditional-gradient steps, an exact two-variable segment subproblem, a
shrinkage pass on S, and self-tightening bounds.  ``ml_fwt_solve`` runs the
nuclear-ball oracle on a column-restricted gradient and lifts the atom back.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import multilevel
from .linalg import as_matrix, soft_threshold, svd_truncated
from .pcp import IterationRecord


class ObservationMask:
    """Entrywise observation pattern; projection zeroes unobserved entries."""

    def __init__(self, observed):
        observed = np.asarray(observed)
        if observed.ndim != 2:
            raise ValueError("mask must be 2-D")
        self.observed = observed.astype(bool)
        self.rows, self.cols = self.observed.shape

    @classmethod
    def full(cls, rows, cols):
        return cls(np.ones((rows, cols), dtype=bool))

    @classmethod
    def random(cls, rows, cols, fraction, rng):
        """Keep ``fraction`` of entries observed, placed uniformly at random."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        count = int(round(fraction * rows * cols))
        flat = np.zeros(rows * cols, dtype=bool)
        flat[rng.choice(rows * cols, size=count, replace=False)] = True
        return cls(flat.reshape(rows, cols))

    def project(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.observed.shape:
            raise ValueError(
                f"matrix shape {x.shape} does not match mask {self.observed.shape}"
            )
        return np.where(self.observed, x, 0.0)


def project_mask(x, mask):
    """Projection onto the observed entries; ``mask=None`` means identity."""
    x = as_matrix(x)
    if mask is None:
        return x.copy()
    return mask.project(x)


@dataclass
class CpcpOptions:
    """Penalty weights and stopping control for the Frank-Wolfe solvers.

    Convergence is declared when the relative objective decrease over a
    5-iteration window falls below ``tol``.  ``levels`` forces the coarse
    width of the multilevel oracle; ``collect_rank`` toggles the per-iteration
    numerical rank of L in the history (one thin-SVD per iteration, which can
    dominate large runs).
    """

    lambda_l: float
    lambda_s: float
    tol: float = 1e-3
    max_iters: int = 2000
    rank_guess: int = 5
    levels: int | None = None
    time_budget: float | None = None
    collect_rank: bool = True
    track_oracle_atoms: bool = False

    def validate(self):
        if self.lambda_l <= 0 or self.lambda_s <= 0:
            raise ValueError("penalty weights must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class CpcpState:
    """Final iterate of a Frank-Wolfe solve plus its telemetry.

    The epigraph variables satisfy ``||L||_* <= t_l <= u_l`` and
    ``||S||_1 <= t_s <= u_s`` after every iteration.
    """

    l: np.ndarray
    s: np.ndarray
    t_l: float
    t_s: float
    u_l: float
    u_s: float
    iter: int
    history: list
    objective_history: list
    converged: bool
    oracle_atoms: list | None = None


def cpcp_objective(l, s, t_l, t_s, d, mask, lambda_l, lambda_s):
    """Epigraph objective ``0.5*||P[L+S-D]||_F^2 + lam_l*t_l + lam_s*t_s``."""
    r = project_mask(l + s - d, mask)
    return 0.5 * float(np.sum(r * r)) + lambda_l * t_l + lambda_s * t_s


def initial_bounds(d, mask, lambda_l, lambda_s):
    """Starting box bounds ``u = ||P[D]||_F^2 / (2*lam)`` for each block.

    They bound the epigraph variables of any solution, so the feasible set
    has diameter at most ``sqrt(5) * sqrt(u_l^2 + u_s^2)``.
    """
    if lambda_l <= 0 or lambda_s <= 0:
        raise ValueError("penalty weights must be positive")
    p = project_mask(as_matrix(d, "d"), mask)
    sq = float(np.sum(p * p))
    return sq / (2.0 * lambda_l), sq / (2.0 * lambda_s)


def diameter_bound(u_l, u_s):
    """Feasible-set diameter estimate used by the convergence-rate monitor."""
    return float(np.sqrt(5.0) * np.sqrt(u_l**2 + u_s**2))


def nuclear_lmo(g, radius):
    """Minimise ``<G, M>`` over the nuclear ball of the given radius.

    The minimiser is ``-radius * u1 @ v1.T`` built from the leading singular
    triple of ``G``; the attained value is ``-radius * sigma_1(G)``.
    """
    g = as_matrix(g, "g")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0.0:
        return np.zeros_like(g), 0.0
    u, s, v = svd_truncated(g, 1)
    m = -radius * np.outer(u[:, 0], v[:, 0])
    return m, -radius * float(s[0])


def _l1_argmax(g):
    # Largest |entry| with column-major first-occurrence tie break: smallest
    # column first (argmax over column maxima), smallest row within it.
    col_rows = np.argmax(np.abs(g), axis=0)
    col_vals = np.abs(g[col_rows, np.arange(g.shape[1])])
    j = int(np.argmax(col_vals))
    return int(col_rows[j]), j


def l1_lmo(g, radius):
    """Minimise ``<G, M>`` over the l1 ball: a single signed spike.

    The spike lands on the largest-magnitude entry of ``G`` (first occurrence
    in column-major order on ties); a zero gradient returns the zero matrix.
    """
    g = as_matrix(g, "g")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    i, j = _l1_argmax(g)
    m = np.zeros_like(g)
    if radius == 0.0 or g[i, j] == 0.0:
        return m, 0.0
    m[i, j] = -radius * np.sign(g[i, j])
    return m, -radius * float(abs(g[i, j]))


def corner_select(grad_inner, lam, u, m):
    """Pick the block corner: zero when the penalty beats the oracle gain.

    ``grad_inner`` is the oracle value ``<G, M>`` at unit radius.  Returns the
    scaled corner ``(u * M, u)`` only when ``lam < -grad_inner``; ties go to
    the zero corner.
    """
    if u < 0:
        raise ValueError("bound must be nonnegative")
    if lam >= -grad_inner:
        return np.zeros_like(m), 0.0
    return u * m, float(u)


def _coord_min(quad, lin):
    # 1-D minimiser of .5*quad*g^2 + lin*g over [0, 1].
    if quad <= 0.0:
        return 1.0 if lin < 0.0 else 0.0
    return float(min(max(-lin / quad, 0.0), 1.0))


def _solve_box_qp(aa, bb, ab, la, lb, fallback_gamma=None):
    # Minimise .5*(aa*ga^2 + 2*ab*ga*gb + bb*gb^2) + la*ga + lb*gb over the
    # unit box: interior stationary point when valid, otherwise exact
    # coordinate minimisation (each step closed form) to 1e-12.
    def value(ga, gb):
        return (0.5 * (aa * ga * ga + 2 * ab * ga * gb + bb * gb * gb)
                + la * ga + lb * gb)

    det = aa * bb - ab * ab
    best = None
    if det > 0.0:
        ga = (-la * bb + lb * ab) / det
        gb = (-lb * aa + la * ab) / det
        if 0.0 <= ga <= 1.0 and 0.0 <= gb <= 1.0:
            best = (ga, gb)
    if best is None:
        ga, gb = 0.0, 0.0
        for _ in range(200):
            ga_new = _coord_min(aa, la + ab * gb)
            gb_new = _coord_min(bb, lb + ab * ga_new)
            if abs(ga_new - ga) <= 1e-12 and abs(gb_new - gb) <= 1e-12:
                ga, gb = ga_new, gb_new
                break
            ga, gb = ga_new, gb_new
        best = (ga, gb)
    if fallback_gamma is not None:
        gf = float(min(max(fallback_gamma, 0.0), 1.0))
        if value(gf, gf) < value(*best):
            best = (gf, gf)
    return best


def segment_qp(l, s, t_l, t_s, v_l, v_tl, v_s, v_ts, d, mask,
               lambda_l, lambda_s, fallback_gamma=None):
    """Exact minimisation of the objective over the two corner segments.

    The point moves along ``L + g_l*(V_L - L)`` and ``S + g_s*(V_S - S)``
    (with the epigraph variables interpolating the same way), so the
    objective is a convex quadratic in ``(g_l, g_s)`` over the unit box.  The
    unconstrained stationary point is used when it is interior; otherwise
    exact coordinate minimisation runs to 1e-12.  When ``fallback_gamma`` is
    given, the classical step ``g_l = g_s = fallback_gamma`` is also evaluated
    and kept if better, so the step never loses to it.
    """
    r0 = project_mask(l + s - d, mask)
    a = project_mask(v_l - l, mask)
    b = project_mask(v_s - s, mask)
    d_tl = v_tl - t_l
    d_ts = v_ts - t_s
    ga, gb = _solve_box_qp(
        float(np.sum(a * a)), float(np.sum(b * b)), float(np.sum(a * b)),
        float(np.sum(a * r0)) + lambda_l * d_tl,
        float(np.sum(b * r0)) + lambda_s * d_ts,
        fallback_gamma,
    )
    l_new = l + ga * (v_l - l)
    s_new = s + gb * (v_s - s)
    return (l_new, s_new,
            t_l + ga * d_tl, t_s + gb * d_ts)


def threshold_step(l, s_half, d, mask, lambda_s):
    """Shrinkage pass on the sparse block after the segment step.

    Applies ``soft_threshold(S - P[L + S - D], lambda_s)`` using the L just
    produced by the segment subproblem and re-tightens ``t_s`` to the exact
    l1 norm of the result.
    """
    s_new = soft_threshold(s_half - project_mask(l + s_half - d, mask), lambda_s)
    return s_new, float(np.sum(np.abs(s_new)))


def update_bounds(objective, u_l, u_s, lambda_l, lambda_s):
    """Tighten the box bounds from the current objective, never loosening."""
    return (min(u_l, objective / lambda_l),
            min(u_s, objective / lambda_s))


def _converged(obj_history, tol, window=5):
    if len(obj_history) <= window:
        return False
    prev = obj_history[-1 - window]
    drop = prev - obj_history[-1]
    return drop <= tol * max(abs(prev), np.finfo(float).tiny)


class _LeadingTriple:
    """Warm-started leading singular triple for the solver's nuclear oracle.

    Successive Frank-Wolfe gradients change slowly, so power iteration from
    the previous right vector converges in a few passes; iteration stops when
    the Rayleigh estimate of ``sigma_1^2`` stalls to ``value_rtol``.  The
    returned vectors are exactly unit norm (so the oracle atom is exactly
    feasible) and the value estimate is accurate to roughly ``value_rtol``,
    which only perturbs the zero-corner tie band of the solver.
    """

    def __init__(self, cols, value_rtol=1e-6, max_passes=40):
        self.v = np.ones(cols) / np.sqrt(cols)
        self.value_rtol = value_rtol
        self.max_passes = max_passes

    def __call__(self, g):
        v = self.v
        s2_prev = -1.0
        u = None
        for _ in range(self.max_passes):
            gu = g @ v
            s2 = float(gu.dot(gu))  # Rayleigh quotient of G^T G at unit v
            if s2 == 0.0:
                return None, 0.0, None
            u = gu / np.sqrt(s2)
            w = g.T @ u
            nw = float(np.sqrt(w.dot(w)))
            if nw == 0.0:
                return None, 0.0, None
            v = w / nw
            if abs(s2 - s2_prev) <= self.value_rtol * s2:
                break
            s2_prev = s2
        self.v = v
        return u, nw, v


def _run_fwt(d, mask, opts, lmo_l):
    # The loop keeps the projected residual r = P[L + S - D] up to date
    # incrementally (each step changes it by a known projected direction) and
    # refreshes it from scratch periodically to cap floating-point drift.
    # The inlined steps compute exactly what the public operations
    # (corner_select, segment_qp, threshold_step, update_bounds) define.
    d = as_matrix(d, "d")
    opts.validate()
    m, n = d.shape
    if mask is not None and mask.observed.shape != d.shape:
        raise ValueError("mask shape does not match data")
    mask_f = mask.observed.astype(np.float64) if mask is not None else None
    lam_l, lam_s = opts.lambda_l, opts.lambda_s

    u_l, u_s = initial_bounds(d, mask, lam_l, lam_s)
    l = np.zeros_like(d)
    s = np.zeros_like(d)
    t_l = t_s = 0.0

    history, obj_history = [], []
    converged = False
    start = time.perf_counter()
    if u_l == 0.0:  # P[D] = 0: the zero decomposition is already optimal
        history.append(IterationRecord(1, 0.0, 0.0, 0, 0.0, 0.0))
        return CpcpState(l, s, 0.0, 0.0, 0.0, 0.0, 1, history, [0.0], True)

    r = project_mask(d, mask)
    p_d_norm = float(np.sqrt(r.ravel().dot(r.ravel())))
    np.negative(r, out=r)
    atoms = [] if opts.track_oracle_atoms else None
    k = 0
    for k in range(1, opts.max_iters + 1):
        m_l, val_l = lmo_l(r)
        if atoms is not None:
            atoms.append(m_l.copy())
        i_s, j_s = _l1_argmax(r)
        val_s = -abs(float(r[i_s, j_s]))

        # corner selection; a zero corner never materialises its matrix
        corner_l = lam_l < -val_l
        corner_s = lam_s < -val_s
        v_tl = u_l if corner_l else 0.0
        v_ts = u_s if corner_s else 0.0

        # projected segment directions a = P[V_L - L], b = P[V_S - S]
        if corner_l:
            a = u_l * m_l
            a -= l
        else:
            a = -l
        if mask_f is not None:
            a *= mask_f
        if mask_f is not None:
            b = s * mask_f
            np.negative(b, out=b)
        else:
            b = -s
        spike = -u_s * np.sign(r[i_s, j_s]) if corner_s else 0.0
        if corner_s:
            b[i_s, j_s] += spike

        rr = r.ravel()
        ga, gb = _solve_box_qp(
            float(a.ravel().dot(a.ravel())),
            float(b.ravel().dot(b.ravel())),
            float(a.ravel().dot(b.ravel())),
            float(a.ravel().dot(rr)) + lam_l * (v_tl - t_l),
            float(b.ravel().dot(rr)) + lam_s * (v_ts - t_s),
            fallback_gamma=2.0 / (k + 2.0),
        )

        # move L and S half-step along the segments; update r with the same
        # projected directions
        l *= 1.0 - ga
        if corner_l:
            m_l *= ga * u_l
            l += m_l
        s *= 1.0 - gb
        if corner_s:
            s[i_s, j_s] += gb * spike
        t_l += ga * (v_tl - t_l)
        t_s += gb * (v_ts - t_s)
        a *= ga
        r += a
        b *= gb
        r += b

        # shrinkage pass on S (s currently holds the half-step value)
        w = s - r
        s_new = soft_threshold(w, lam_s)
        ds = s_new - s
        if mask_f is not None:
            ds *= mask_f
        r += ds
        s = s_new
        t_s = float(np.abs(s).sum())

        if k % 64 == 0:  # refresh the incrementally tracked residual
            r = l + s
            r -= d
            if mask_f is not None:
                r *= mask_f

        sq = float(r.ravel().dot(r.ravel()))
        obj = 0.5 * sq + lam_l * t_l + lam_s * t_s
        u_l, u_s = update_bounds(obj, u_l, u_s, lam_l, lam_s)
        obj_history.append(obj)

        if opts.collect_rank:
            sig = np.linalg.svd(l, compute_uv=False)
            rank = int(np.count_nonzero(
                sig > sig[0] * max(m, n) * np.finfo(float).eps)) if sig[0] > 0 else 0
        else:
            rank = -1
        history.append(IterationRecord(
            iter=k,
            feasibility_gap=float(np.sqrt(sq)) / p_d_norm,
            objective=obj,
            rank_l=rank,
            sparsity_s=float(np.count_nonzero(s)) / (m * n),
            wall_seconds=time.perf_counter() - start,
        ))
        if _converged(obj_history, opts.tol):
            converged = True
            break
        if opts.time_budget is not None and history[-1].wall_seconds >= opts.time_budget:
            break

    return CpcpState(l=l, s=s, t_l=t_l, t_s=t_s, u_l=u_l, u_s=u_s, iter=k,
                     history=history, objective_history=obj_history,
                     converged=converged, oracle_atoms=atoms)


def fwt_solve(d, mask=None, opts=None):
    """Frank-Wolfe thresholding on the fine problem.

    The nuclear-ball oracle uses the leading singular triple of the full
    gradient (warm-started power iteration with an exact-SVD fallback).
    History records the masked relative residual as the feasibility column.
    """
    if opts is None:
        raise ValueError("CpcpOptions with penalty weights is required")
    d = as_matrix(d, "d")
    triple = _LeadingTriple(d.shape[1])

    def lmo(g):
        u, sigma, v = triple(g)
        if u is None:
            return np.zeros_like(g), 0.0
        return -np.outer(u, v), -sigma

    return _run_fwt(d, mask, opts, lmo)


def ml_fwt_solve(d, mask=None, opts=None):
    """Multilevel Frank-Wolfe thresholding.

    The nuclear oracle restricts the gradient to the coarse column space,
    solves there on a ball of radius ``1/sigma_1(R)``, and prolongs the atom,
    which keeps it inside the fine unit nuclear ball.  Everything else
    matches :func:`fwt_solve`.
    """
    if opts is None:
        raise ValueError("CpcpOptions with penalty weights is required")
    d = as_matrix(d, "d")
    m, n = d.shape
    if opts.levels is not None:
        if opts.levels < 1:
            raise multilevel.LevelError(
                f"coarse size {opts.levels} is invalid: the rank bound "
                f"requires rank(L) <= n_H <= (m+1)/2 with n_H >= 1"
            )
        n_coarse = int(opts.levels)
    else:
        n_coarse = multilevel.select_levels(n, opts.rank_guess, 1, m)
    chain = multilevel.build_chain(n, n_coarse, normalize=True)
    radius = 1.0 / float(chain.composite_sigmas()[0])
    r_dense = chain.composite.toarray()
    triple = _LeadingTriple(chain.n_coarse)

    def coarse_lmo(g):
        g_h = g @ r_dense
        u, sigma, v = triple(g_h)
        if u is None:
            return np.zeros_like(g), 0.0
        m_h = (-radius) * np.outer(u, v)
        # <G, M_H R^T> = <G R, M_H>, so the coarse value is the fine one.
        return m_h @ r_dense.T, -radius * sigma

    return _run_fwt(d, mask, opts, coarse_lmo)

"""Command-line front end.

Subcommands: ``synth`` (generate a benchmark problem), ``solve-pcp`` /
``solve-cpcp`` (decompose a saved matrix), ``video`` (ingest PGM frames,
solve, optionally emit component frames), and ``compare`` (run two solvers
sequentially on the same input and write both metric traces).

Every run writes a ``manifest.txt`` of ``key=value`` lines with the resolved
configuration; re-running the recorded command reproduces the .lrml outputs
bit for bit in single-threaded mode.  Exit status: 0 on success, 1 when the
solver did not converge (outputs are still written), 2 on usage errors.
"""

import argparse
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, io
from .cpcp import CpcpOptions, ObservationMask, fwt_solve, ml_fwt_solve
from .datasets import synth_rpca, synth_rpca_coarse
from .multilevel import LevelError
from .pcp import PcpOptions, ialm_solve, ml_ialm_solve

PCP_SOLVERS = ("ialm", "ml-ialm")
CPCP_SOLVERS = ("fwt", "ml-fwt")


class UsageError(ValueError):
    """Invalid flag combination or value; maps to exit status 2."""


@dataclass
class RunConfig:
    command: str
    solver: str | None = None
    solver_b: str | None = None
    input: str | None = None
    frames: list = field(default_factory=list)
    out: str = "."
    m: int | None = None
    n: int | None = None
    rank: int = 2
    eta: float = 0.05
    seed: int = 0
    observe_fraction: float | None = None
    coarse_cols: int | None = None
    lam: float | None = None
    lambda_l: float | None = None
    lambda_s: float | None = None
    mu0: float | None = None
    rho: float = 1.5
    tol: float | None = None
    max_iters: int | None = None
    rank_guess: int = 5
    levels: int | None = None
    time_budget: float | None = None
    mask_path: str | None = None
    emit_frames: bool = False
    threads: int = 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mlrpca",
        description="Low-rank + sparse decomposition with multilevel solvers.",
    )
    sub = parser.add_subparsers(dest="command")

    def add_solver_flags(p, solvers):
        p.add_argument("--solver", choices=solvers, required=True)
        p.add_argument("--tol", type=float, default=None,
                       help="stopping tolerance (solver specific default)")
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--rank-guess", type=int, default=5)
        p.add_argument("--levels", type=int, default=None,
                       help="explicit coarse width for multilevel solvers")
        p.add_argument("--time", type=float, default=None, dest="time_budget",
                       help="wall-clock budget in seconds; wins over --max-iters")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic problem")
    p_synth.add_argument("--m", type=int, required=True)
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--rank", type=int, required=True)
    p_synth.add_argument("--eta", type=float, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--observe-fraction", type=float, default=None)
    p_synth.add_argument("--coarse-cols", type=int, default=None,
                         help="build the low-rank truth through a restriction chain")
    p_synth.add_argument("--out", required=True)

    p_pcp = sub.add_parser("solve-pcp", help="IALM / ML-IALM on a saved matrix")
    p_pcp.add_argument("--input", required=True, help=".lrml data matrix")
    p_pcp.add_argument("--lambda", type=float, default=None, dest="lam")
    p_pcp.add_argument("--mu0", type=float, default=None)
    p_pcp.add_argument("--rho", type=float, default=1.5)
    add_solver_flags(p_pcp, PCP_SOLVERS)

    p_cpcp = sub.add_parser("solve-cpcp", help="FWT / ML-FWT on a saved matrix")
    p_cpcp.add_argument("--input", required=True)
    p_cpcp.add_argument("--lambda-l", type=float, default=None)
    p_cpcp.add_argument("--lambda-s", type=float, default=None)
    p_cpcp.add_argument("--mask", default=None, dest="mask_path",
                        help=".lrml 0/1 matrix marking observed entries")
    add_solver_flags(p_cpcp, CPCP_SOLVERS)

    p_video = sub.add_parser("video", help="frame-stack pipeline")
    p_video.add_argument("--frames", nargs="+", required=True,
                         help="ordered PGM frame paths")
    p_video.add_argument("--lambda", type=float, default=None, dest="lam")
    p_video.add_argument("--lambda-l", type=float, default=None)
    p_video.add_argument("--lambda-s", type=float, default=None)
    p_video.add_argument("--emit-frames", action="store_true")
    add_solver_flags(p_video, PCP_SOLVERS + CPCP_SOLVERS)

    p_cmp = sub.add_parser("compare", help="run two solvers on the same input")
    p_cmp.add_argument("--input", required=True)
    p_cmp.add_argument("--solver-a", choices=PCP_SOLVERS + CPCP_SOLVERS,
                       required=True)
    p_cmp.add_argument("--solver-b", choices=PCP_SOLVERS + CPCP_SOLVERS,
                       required=True)
    p_cmp.add_argument("--lambda", type=float, default=None, dest="lam")
    p_cmp.add_argument("--lambda-l", type=float, default=None)
    p_cmp.add_argument("--lambda-s", type=float, default=None)
    p_cmp.add_argument("--mask", default=None, dest="mask_path")
    p_cmp.add_argument("--tol", type=float, default=None)
    p_cmp.add_argument("--max-iters", type=int, default=None)
    p_cmp.add_argument("--rank-guess", type=int, default=5)
    p_cmp.add_argument("--levels", type=int, default=None)
    p_cmp.add_argument("--time", type=float, default=None, dest="time_budget")
    p_cmp.add_argument("--threads", type=int, default=1)
    p_cmp.add_argument("--out", required=True)
    return parser


def parse_args(argv):
    """Parse flags into a RunConfig; raises SystemExit(2) on unknown flags."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    cfg = RunConfig(command=ns.command)
    for key, value in vars(ns).items():
        if key == "command":
            continue
        attr = {"solver_a": "solver"}.get(key, key)
        setattr(cfg, attr, value)
    if ns.command == "compare":
        cfg.solver = ns.solver_a
        cfg.solver_b = ns.solver_b
    if cfg.time_budget is not None and cfg.max_iters is not None:
        print("warning: both --time and --max-iters given; --time wins",
              file=sys.stderr)
    return cfg


def _manifest_lines(cfg, extra):
    pairs = {"version": __version__, "command": cfg.command}
    for key, value in sorted(vars(cfg).items()):
        if key == "command" or value in (None, [], False):
            continue
        if isinstance(value, list):
            value = ";".join(map(str, value))
        pairs[key] = value
    pairs.update(extra)
    return [f"{k}={v}" for k, v in pairs.items()]


def _write_manifest(cfg, out_dir, extra):
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(_manifest_lines(cfg, extra)) + "\n")


def _pcp_options(cfg):
    return PcpOptions(
        lam=cfg.lam,
        mu0=cfg.mu0,
        rho=cfg.rho,
        tol_feasibility=cfg.tol if cfg.tol is not None else 1e-7,
        max_iters=cfg.max_iters if cfg.max_iters is not None else 500,
        rank_guess=cfg.rank_guess,
        levels=cfg.levels,
        time_budget=cfg.time_budget,
    )


def _cpcp_options(cfg, shape):
    lam_l = cfg.lambda_l
    if lam_l is None:
        lam_l = 1.0 / np.sqrt(max(shape))
    lam_s = cfg.lambda_s
    if lam_s is None:
        lam_s = lam_l / np.sqrt(max(shape))
    return CpcpOptions(
        lambda_l=lam_l,
        lambda_s=lam_s,
        tol=cfg.tol if cfg.tol is not None else 1e-3,
        max_iters=cfg.max_iters if cfg.max_iters is not None else 2000,
        rank_guess=cfg.rank_guess,
        levels=cfg.levels,
        time_budget=cfg.time_budget,
        collect_rank=False,
    )


def _numerical_rank(x):
    sig = np.linalg.svd(x, compute_uv=False)
    if sig.size == 0 or sig[0] == 0.0:
        return 0
    return int(np.count_nonzero(sig > sig[0] * max(x.shape) * np.finfo(float).eps))


def _solve_one(solver, d, mask, cfg):
    if solver in PCP_SOLVERS:
        if mask is not None:
            raise UsageError("PCP solvers require fully observed data")
        opts = _pcp_options(cfg)
        fn = ialm_solve if solver == "ialm" else ml_ialm_solve
        t0 = time.perf_counter()
        state = fn(d, opts)
        elapsed = time.perf_counter() - t0
        resolved = {"lambda": opts.lam if opts.lam is not None
                    else 1.0 / np.sqrt(max(d.shape))}
    else:
        opts = _cpcp_options(cfg, d.shape)
        fn = fwt_solve if solver == "fwt" else ml_fwt_solve
        t0 = time.perf_counter()
        state = fn(d, mask, opts)
        elapsed = time.perf_counter() - t0
        resolved = {"lambda_l": opts.lambda_l, "lambda_s": opts.lambda_s}
    return state, elapsed, resolved


def _summary(solver, seconds, state, d):
    rank = _numerical_rank(state.l)
    sparsity = float(np.count_nonzero(state.s)) / state.s.size
    fg = float(np.linalg.norm(d - state.l - state.s, "fro")
               / max(np.linalg.norm(d, "fro"), np.finfo(float).tiny))
    objective = state.history[-1].objective if state.history else 0.0
    line = (f"{solver}, {seconds:.3f}, {objective:.6g}, {rank}, "
            f"{sparsity:.4f}, {fg:.6g}")
    return line, rank


def _load_mask(cfg, shape):
    if cfg.mask_path is None:
        return None
    raw = io.load_matrix(cfg.mask_path)
    if raw.shape != shape:
        raise UsageError(
            f"mask shape {raw.shape} does not match data shape {shape}")
    return ObservationMask(raw != 0.0)


def run(cfg):
    """Execute a parsed configuration; returns the process exit status."""
    from pathlib import Path

    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - dependency is declared
        threadpool_limits = None

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.command == "synth":
        if cfg.coarse_cols is not None:
            problem = synth_rpca_coarse(cfg.m, cfg.n, cfg.coarse_cols,
                                        cfg.rank, cfg.eta, cfg.seed,
                                        cfg.observe_fraction)
        else:
            problem = synth_rpca(cfg.m, cfg.n, cfg.rank, cfg.eta, cfg.seed,
                                 cfg.observe_fraction)
        io.save_matrix(problem.d, out_dir / "d.lrml")
        io.save_matrix(problem.l_truth, out_dir / "l_truth.lrml")
        io.save_matrix(problem.s_truth, out_dir / "s_truth.lrml")
        extra = {}
        if problem.mask is not None:
            io.save_matrix(problem.mask.observed.astype(np.float64),
                           out_dir / "mask.lrml")
            extra["mask_file"] = "mask.lrml"
        _write_manifest(cfg, out_dir, extra)
        print(f"wrote d.lrml l_truth.lrml s_truth.lrml to {out_dir}")
        return 0

    if cfg.command in ("solve-pcp", "solve-cpcp"):
        d = io.load_matrix(cfg.input)
        mask = _load_mask(cfg, d.shape) if cfg.command == "solve-cpcp" else None
        limiter = threadpool_limits(cfg.threads) if threadpool_limits else None
        try:
            state, elapsed, resolved = _solve_one(cfg.solver, d, mask, cfg)
        finally:
            if limiter is not None:
                limiter.unregister()
        io.save_matrix(state.l, out_dir / "l.lrml")
        io.save_matrix(state.s, out_dir / "s.lrml")
        io.write_metrics(state.history, out_dir / "metrics.csv")
        line, _ = _summary(cfg.solver, elapsed, state, d)
        _write_manifest(cfg, out_dir, {**resolved,
                                       "converged": state.converged})
        print("solver, seconds, objective, rank(L), sparsity(S), FG")
        print(line)
        return 0 if state.converged else 1

    if cfg.command == "video":
        stack = io.ingest_frames(cfg.frames)
        d = stack.matrix
        limiter = threadpool_limits(cfg.threads) if threadpool_limits else None
        try:
            state, elapsed, resolved = _solve_one(cfg.solver, d, None, cfg)
        finally:
            if limiter is not None:
                limiter.unregister()
        io.save_matrix(state.l, out_dir / "l.lrml")
        io.save_matrix(state.s, out_dir / "s.lrml")
        io.write_metrics(state.history, out_dir / "metrics.csv")
        if cfg.emit_frames:
            io.emit_frames(stack, state.l, state.s, out_dir / "frames")
        line, _ = _summary(cfg.solver, elapsed, state, d)
        _write_manifest(cfg, out_dir, {
            **resolved,
            "converged": state.converged,
            "frame_height": stack.frame_height,
            "frame_width": stack.frame_width,
        })
        print("solver, seconds, objective, rank(L), sparsity(S), FG")
        print(line)
        return 0 if state.converged else 1

    if cfg.command == "compare":
        d = io.load_matrix(cfg.input)
        mask = _load_mask(cfg, d.shape)
        print("solver, seconds, objective, rank(L), sparsity(S), FG")
        status = 0
        resolved_all = {}
        limiter = threadpool_limits(cfg.threads) if threadpool_limits else None
        try:
            for tag, solver in (("a", cfg.solver), ("b", cfg.solver_b)):
                state, elapsed, resolved = _solve_one(
                    solver, d, mask if solver in CPCP_SOLVERS else None, cfg)
                io.write_metrics(state.history, out_dir / f"metrics_{tag}.csv")
                io.save_matrix(state.l, out_dir / f"l_{tag}.lrml")
                io.save_matrix(state.s, out_dir / f"s_{tag}.lrml")
                line, _ = _summary(solver, elapsed, state, d)
                print(line)
                resolved_all.update(
                    {f"{tag}_{k}": v for k, v in resolved.items()})
                resolved_all[f"{tag}_converged"] = state.converged
                if not state.converged:
                    status = 1
        finally:
            if limiter is not None:
                limiter.unregister()
        _write_manifest(cfg, out_dir, resolved_all)
        return status

    raise UsageError(f"unknown command {cfg.command!r}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return run(cfg)
    except (UsageError, LevelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _build_parser().print_usage(sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Low-rank + sparse matrix decomposition with multilevel acceleration.

The package solves principal component pursuit (exact decomposition,
``ialm_solve`` / ``ml_ialm_solve``) and its penalised, partially observed
generalisation (``fwt_solve`` / ``ml_fwt_solve``).  The multilevel variants
run their singular-value computations on column-restricted matrices built by
the ``multilevel`` module, which is what makes them fast on wide data.
"""

__version__ = "0.1.0"

from .cpcp import (
    CpcpOptions,
    CpcpState,
    ObservationMask,
    corner_select,
    cpcp_objective,
    fwt_solve,
    initial_bounds,
    l1_lmo,
    ml_fwt_solve,
    nuclear_lmo,
    project_mask,
    segment_qp,
    threshold_step,
    update_bounds,
)
from .datasets import SyntheticProblem, synth_rpca, synth_rpca_coarse
from .io import (
    FormatError,
    FrameStack,
    emit_frames,
    ingest_frames,
    load_matrix,
    read_metrics,
    save_matrix,
    write_metrics,
)
from .linalg import (
    MatrixNorms,
    SvdError,
    SvdFactors,
    norms,
    soft_threshold,
    svd_full,
    svd_truncated,
    svt,
)
from .multilevel import (
    LevelError,
    MultilevelDiagnostics,
    RestrictionChain,
    build_chain,
    build_interpolation,
    epsilon_bound,
    prolong,
    restrict,
    restrict_least_squares,
    select_levels,
)
from .pcp import (
    IterationRecord,
    PcpOptions,
    PcpState,
    feasibility_gap,
    ialm_solve,
    ml_ialm_solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]

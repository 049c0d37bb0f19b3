"""Robust low-rank matrix completion on the Grassmann manifold.

The low-rank factor ``U`` lives on Gr(m, r), ``V`` is eliminated by an exact
block least-squares solve, and the sparse outlier matrix ``S`` is handled by
an l1 proximal step. See :mod:`grassrmc.solvers` for the algorithms.
"""
from ._parallel import get_threads, set_threads
from .datagen import (
    GroundTruth,
    SyntheticSpec,
    case_names,
    case_params,
    generate_synthetic,
    relative_difference,
    spectral_init,
    stability_gap,
)
from .errors import (
    ConvergenceWarning,
    DimensionMismatch,
    DuplicateEntry,
    FormatError,
    InconsistentDimensions,
    IndexOutOfRange,
    InvalidSpec,
    NonFiniteValue,
    NotOrthonormal,
    ParseError,
    RankDeficient,
    RMCError,
    SingularBlock,
    StaleState,
    TruncatedFile,
    ZeroDenominator,
)
from .grassmann import GrassmannPoint, orthonormalize, retract_qr, tangent_project
from .io import (
    FrameStack,
    read_dense,
    read_log,
    read_matrix_market,
    read_pgm_stack,
    write_dense,
    write_log,
    write_matrix_market,
    write_pgm,
)
from .objective import (
    BlockFactor,
    IterateState,
    ProblemInstance,
    eval_objective,
    grad_s,
    grad_u,
    make_state,
    solve_v,
)
from .observation import (
    ObservationSet,
    build_observation_set,
    project_complement_norm_sq,
    residual_on_omega,
)
from .solvers import (
    ContinuationSchedule,
    ConvergenceRecord,
    Solution,
    SolverConfig,
    Status,
    amanpg_solve,
    amanpgc_solve,
    manpg_solve,
    manpgc_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BlockFactor",
    "ContinuationSchedule",
    "ConvergenceRecord",
    "ConvergenceWarning",
    "DimensionMismatch",
    "DuplicateEntry",
    "FormatError",
    "FrameStack",
    "GroundTruth",
    "InconsistentDimensions",
    "IndexOutOfRange",
    "InvalidSpec",
    "IterateState",
    "NonFiniteValue",
    "NotOrthonormal",
    "ObservationSet",
    "ParseError",
    "ProblemInstance",
    "RMCError",
    "RankDeficient",
    "SingularBlock",
    "Solution",
    "SolverConfig",
    "StaleState",
    "Status",
    "SyntheticSpec",
    "TruncatedFile",
    "ZeroDenominator",
    "amanpg_solve",
    "amanpgc_solve",
    "build_observation_set",
    "case_names",
    "case_params",
    "eval_objective",
    "generate_synthetic",
    "GrassmannPoint",
    "get_threads",
    "orthonormalize",
    "retract_qr",
    "tangent_project",
    "grad_s",
    "grad_u",
    "make_state",
    "manpg_solve",
    "manpgc_solve",
    "project_complement_norm_sq",
    "read_dense",
    "read_log",
    "read_matrix_market",
    "read_pgm_stack",
    "relative_difference",
    "residual_on_omega",
    "set_threads",
    "solve_v",
    "spectral_init",
    "stability_gap",
    "write_dense",
    "write_log",
    "write_matrix_market",
    "write_pgm",
]

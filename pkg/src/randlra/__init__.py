"""Randomized low-rank approximation with a fixed budget of matrix views."""
from .errors import (
    ArgumentError,
    BudgetError,
    DefinitenessError,
    DegenerateSpectrumError,
    FormatError,
    NumericError,
    RandLRAError,
    StreamError,
)
from .krylov import block_krylov_row_stream, block_krylov_svd
from .linalg import (
    CountingOperator,
    DenseOperator,
    DiagonalOperator,
    EvdPair,
    LinearOperator,
    SvdTriple,
    make_rng,
    srft_matrix,
)
from .lm import LmState, lm_update_dx1, lm_update_dx2, lm_update_dx3, posterior_inverse_apply
from .normal import nystrom_normal, pinched_normal
from .oneview import (
    OversamplingPlan,
    extended_sketch_approx,
    min_variance_lc,
    one_view_minvar,
    one_view_tropp,
    one_view_woolfe,
    plan_balanced,
    plan_decay,
    plan_extended,
    plan_flat,
    plan_rapid,
    row_stream_qb,
    sketch,
)
from .subspace import (
    generalized_subspace_iter,
    generalized_subspace_iter_v2,
    qr_qc,
    subspace_iter_standard,
)
from .testbed import (
    MethodConfig,
    TestMatrixSpec,
    approx_errors,
    best_performance_sweep,
    gen_test_matrix,
    normal_errors,
    run_trials,
)

__version__ = "0.1.0"

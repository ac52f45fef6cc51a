"""crowdmetric: crowd-shared Mahalanobis metric and ideal-point learning from
paired comparisons, with identifiability analysis and recovery-theory checks.
"""

from .kernels import BACKEND
from .linalg import (
    frobenius_ball_project,
    kron_sym,
    l2_ball_project,
    nu,
    nu_inverse,
    nuclear_ball_project,
    numeric_rank,
    psd_project,
    pseudoinverse,
    smallest_singular_value,
    sym_vec_upper,
)
from .selection import (
    SelectionMatrix,
    UserScheme,
    complete_selection,
    find_incremental_permutation,
    fixture_counterexample_necessary,
    fixture_counterexample_sufficiency,
    is_incremental,
    minimal_multiuser_construction,
    newspan_probability,
    randrank_bound,
    sample_uniform_pairs,
    sample_until_rank,
    selection_rank,
)
from .identifiability import (
    GammaSystem,
    NecessaryReport,
    assemble_gamma,
    check_conjectured,
    check_necessary,
    check_sufficient_incremental,
    is_identifiable,
    single_user_thresholds,
)
from .model import (
    CrowdModel,
    LinkFunction,
    ResponseDataset,
    delta,
    gen_items_gaussian,
    gen_metric,
    gen_users_gaussian,
    make_crowd_model,
    response_prob,
    sample_dataset,
    sample_user_pool,
    spawn_rng,
    split_blocked_by_user,
)
from .estimation import (
    ConstraintScheme,
    FitResult,
    Loss,
    SolverConfig,
    SolverError,
    UnidentifiableError,
    empirical_risk,
    fit_erm,
    fit_single_user,
    oracle_hyperparameters,
    oracle_single_user_radius,
    recover_ideal_points,
    risk_subgradient,
    solve_unquantized,
)
from .evaluation import (
    MetricsReport,
    RecoveryBoundReport,
    c_f,
    enumerate_second_moments,
    excess_risk_kl,
    expected_second_moments,
    kl_bernoulli,
    recovery_bound_report,
    relative_errors,
    test_accuracy,
    true_risk_exact,
)

__version__ = "0.1.0"

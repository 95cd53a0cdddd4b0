"""Off-policy evaluation with the ETD(lam, beta) family on tabular MDPs."""

from .emphatic import (
    EmphaticProfile,
    Modulus,
    VarianceDiagnostics,
    average_variance,
    emphatic_f,
    emphatic_m,
    emphatic_profile,
    kappa,
    mismatch_matrix,
    modulus_thm1,
    modulus_thm2,
    second_moment_q,
    spectral_radius,
    variance_bound,
    variance_diagnostics,
    verify_norm_inequality,
)
from .errors import (
    ConfigError,
    EtdLabError,
    InvalidModel,
    NonIrreducibleChain,
    NumericalDivergence,
    RankDeficientFeatures,
    SingularSystem,
    UndefinedRatio,
)
from .fixed_point import (
    BiasReport,
    FixedPointSpec,
    empirical_contraction_norm,
    projection_matrix,
    solve_fixed_point,
)
from .mdp import (
    InducedChain,
    LinearApproximation,
    Policy,
    TabularMdp,
    bellman_apply,
    exact_value,
    importance_ratios,
    induce_chain,
    lambda_matrix,
    stationary_distribution,
    weighted_norm,
)
from .sim import (
    SimConfig,
    TraceState,
    TraceStats,
    Trajectory,
    followon_stats,
    mse_sweep,
    run_etd0,
    run_etd_lambda,
    sample_trajectory,
)

__version__ = "0.1.0"

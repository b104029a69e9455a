"""Urn-process simulation with spectral martingale diagnostics.

A replacement matrix drives a sequential color-drawing process; projections
of the composition vector onto nonprincipal eigenvectors become martingales
after an exact product normalization, and their weighted partial sums on a
logarithmic clock converge to a Gaussian process with independent
increments.  The package simulates the process at scale, checks the algebra
exactly via enumeration oracles, and tests the Gaussian limit statistically.
"""

from .errors import (
    BadColor,
    ComplexSpectrum,
    ConfigError,
    DegenerateVariance,
    HorizonTooLarge,
    InsufficientReplications,
    InvalidConstants,
    NegativeEntry,
    OutOfRange,
    QrNoConvergence,
    Reducible,
    ResidualTooLarge,
    RowSumViolation,
    ShortTrajectory,
    SingularSystem,
    SpectralError,
    StaleNormalizer,
    TooEarly,
    UrnlabError,
)
from .fclt import (
    CovarianceTarget,
    TimeGrid,
    Trajectory,
    accumulate_g,
    collect_trajectory,
    drift_term_diagnostic,
    increment_bound_check,
    theoretical_covariance,
)
from .martingale import (
    NormalizerState,
    normalized_stat,
    normalized_triple,
    normalizer_advance,
    normalizer_closed_form,
    normalizer_init,
    z_increment,
    z_value,
)
from .montecarlo import (
    EnsembleConfig,
    EnsembleResult,
    EnsembleStats,
    TestReport,
    TestThresholds,
    build_report,
    convergence_to_pi_probe,
    covariance_test,
    independent_increments_test,
    moment_boundedness_probe,
    normality_test,
    run_ensemble,
)
from .oracle import (
    KerstingReport,
    MartingaleCheck,
    PathNode,
    RecursionCheck,
    critical_rate_limit,
    enumerate_paths,
    exact_expectation,
    exact_expectation_profile,
    exact_g_covariance,
    exact_mean_w,
    kersting_iterate,
    second_moment_recursion_check,
    verify_martingale,
)
from .rng import CounterRng, mix64, stream_seed, stream_seeds, uniform_at, uniforms_at
from .spectral import (
    Eigenpair,
    Regime,
    ReplacementMatrix,
    Spectrum,
    classify,
    eigenpairs,
    hadamard_spectral_matrix,
    normalize_eigenvector,
    real_eigenvalues,
    spectrum,
    stationary_distribution,
    validate_matrix,
)
from .urn import (
    DrawRecord,
    MassObserver,
    ProjectionDriftObserver,
    UrnState,
    choose_color,
    evolve,
    init_urn,
    step,
)

__version__ = "0.1.0"

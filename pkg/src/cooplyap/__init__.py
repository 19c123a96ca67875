"""Top Lyapunov exponents of linear cooperative systems in random and
deterministic environments: simplex-projected integration, exponent
estimators with certified bounds, and fast/slow timescale analysis."""

from .config import ExperimentConfig, build_environment, parse_config, with_overrides
from .core_linalg import (
    MetzlerMatrix,
    PerronPair,
    SimplexPoint,
    birkhoff_tau,
    dominant_direction,
    hilbert_distance,
    is_irreducible,
    is_metzler,
    perron_eigenpair,
    spectral_abscissa,
    symmetric_part_extremes,
)
from .dynamics import (
    FundamentalMatrix,
    TrajectoryRecord,
    fundamental_matrix,
    integrate,
    matrix_trajectory,
    projective_vector_field,
    synchronized_pair_distance,
    write_trajectory_csv,
)
from .environment import (
    CircleDiffusionEnvironment,
    CirclePoint,
    DiscreteState,
    EnvironmentSpec,
    FourierMatrixMap,
    MarkovSwitchEnvironment,
    PeriodicEnvironment,
    QuasiPeriodicEnvironment,
    TorusPoint,
    UniformMeasure,
    average_matrix,
    env_state_at,
    invariant_measure,
    matrix_at,
)
from .errors import (
    AssumptionViolationError,
    ConfigError,
    ContractionFailureError,
    InvalidMatrixError,
    IterationLimitError,
    NumericalBlowupError,
    NumericalError,
    ReducibilityError,
)
from .lyapunov import (
    METHOD_ERGODIC_AVERAGE,
    METHOD_FLOQUET_MONODROMY,
    METHOD_LOG_NORM_GROWTH,
    METHOD_PERIODIC_FIXED_POINT,
    LambdaEstimate,
    contraction_diagnostics,
    corollary_bounds,
    estimate_lambda,
    lambda_floquet,
    lambda_periodic_exact,
)
from .regimes import (
    RegimeSweepResult,
    log_spaced_timescales,
    occupation_concentration,
    predict_fast_limit,
    predict_slow_limit,
    sweep_lambda,
    write_sweep_csv,
)
from .seeds import derive_seed

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolationError",
    "CircleDiffusionEnvironment",
    "CirclePoint",
    "ConfigError",
    "ContractionFailureError",
    "DiscreteState",
    "EnvironmentSpec",
    "ExperimentConfig",
    "FourierMatrixMap",
    "FundamentalMatrix",
    "InvalidMatrixError",
    "IterationLimitError",
    "LambdaEstimate",
    "MarkovSwitchEnvironment",
    "METHOD_ERGODIC_AVERAGE",
    "METHOD_FLOQUET_MONODROMY",
    "METHOD_LOG_NORM_GROWTH",
    "METHOD_PERIODIC_FIXED_POINT",
    "MetzlerMatrix",
    "NumericalBlowupError",
    "NumericalError",
    "PeriodicEnvironment",
    "PerronPair",
    "QuasiPeriodicEnvironment",
    "ReducibilityError",
    "RegimeSweepResult",
    "SimplexPoint",
    "TorusPoint",
    "TrajectoryRecord",
    "UniformMeasure",
    "average_matrix",
    "birkhoff_tau",
    "build_environment",
    "contraction_diagnostics",
    "corollary_bounds",
    "derive_seed",
    "dominant_direction",
    "env_state_at",
    "estimate_lambda",
    "fundamental_matrix",
    "hilbert_distance",
    "integrate",
    "invariant_measure",
    "is_irreducible",
    "is_metzler",
    "lambda_floquet",
    "lambda_periodic_exact",
    "log_spaced_timescales",
    "matrix_at",
    "matrix_trajectory",
    "occupation_concentration",
    "parse_config",
    "perron_eigenpair",
    "predict_fast_limit",
    "predict_slow_limit",
    "projective_vector_field",
    "spectral_abscissa",
    "sweep_lambda",
    "symmetric_part_extremes",
    "synchronized_pair_distance",
    "with_overrides",
    "write_sweep_csv",
    "write_trajectory_csv",
    "__version__",
]

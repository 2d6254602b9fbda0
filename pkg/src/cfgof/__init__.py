"""Characteristic-function goodness-of-fit tests for heteroskedastic
transformation models ``T_theta(Y) = m(X) + sigma(X) eps``."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BootstrapDegeneracyError,
    EstimationError,
    InvalidInputError,
    OutOfRangeError,
    StudyAborted,
)
from .estimation import ProfileConfig, estimate_theta, profile_loglik  # noqa: E402
from .resampling import (  # noqa: E402
    BootstrapConfig,
    ModelSpec,
    TestResult,
    run_normality_test,
    run_symmetry_test,
    run_test,
)
from .smoothing import Sample, SmootherConfig  # noqa: E402
from .statistics import (  # noqa: E402
    CharacteristicKernel,
    UnivariateWeight,
    WeightSpec,
    delta_stat,
    normality_stat,
    symmetry_stat,
)
from .transform import TransformFamily  # noqa: E402

__all__ = [
    "BootstrapConfig", "BootstrapDegeneracyError", "CharacteristicKernel",
    "EstimationError", "InvalidInputError", "ModelSpec", "OutOfRangeError",
    "ProfileConfig", "Sample", "SmootherConfig", "StudyAborted", "TestResult",
    "TransformFamily", "UnivariateWeight", "WeightSpec", "delta_stat",
    "estimate_theta", "normality_stat", "profile_loglik", "run_normality_test",
    "run_symmetry_test", "run_test", "symmetry_stat",
]

"""charcoal: changepoint estimation in high-dimensional linear regression.

The design matrix is sketched through an orthonormal basis of the orthogonal
complement of its column space, which removes the (possibly dense) baseline
coefficients and turns a sparse change in the coefficients into a sparse
signal that can be scanned over time.  The package provides single- and
multiple-changepoint estimators, an existence test with Monte-Carlo threshold
calibration, synthetic data generators and a benchmark harness, plus a CLI
(``charcoal``) for running everything on CSV data.
"""

from .linalg import (
    ConvergenceError,
    ConvergenceWarning,
    DegenerateInputError,
    DimensionError,
    RankDeficiencyError,
    complement_basis,
    hard_threshold,
    lasso_cd,
    leading_left_singular_vector,
    soft_threshold,
)
from .multi import (
    CandidateRecord,
    Interval,
    MultiConfig,
    MultiResult,
    detect_multiple,
    generate_intervals,
    not_segment,
    prune_candidates,
    refine_full,
    refine_midpoint,
)
from .simulate import (
    MultiScenario,
    MultiSpec,
    SimConfig,
    adjusted_rand_index,
    generate_multi,
    generate_single,
    hausdorff,
    run_benchmark,
)
from .single import (
    DetectionResult,
    GevFitError,
    GevParams,
    SingleEstimate,
    TestConfig,
    ThresholdCalibration,
    bic_score,
    calibrate_threshold,
    calibrate_threshold_detail,
    default_lambda,
    detect_single,
    estimate_lasso_bic,
    estimate_proj,
    estimate_threshold_argmax,
    fit_gev,
    single_test,
)
from .sketch import (
    QMatrix,
    RegressionData,
    SketchedData,
    estimate_sigma_mad,
    g_expected,
    gamma_oracle,
    q_matrix,
    scan_window,
    sketch,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateRecord",
    "ConvergenceError",
    "ConvergenceWarning",
    "DegenerateInputError",
    "DetectionResult",
    "DimensionError",
    "GevFitError",
    "GevParams",
    "Interval",
    "MultiConfig",
    "MultiResult",
    "MultiScenario",
    "MultiSpec",
    "QMatrix",
    "RankDeficiencyError",
    "RegressionData",
    "SimConfig",
    "SingleEstimate",
    "SketchedData",
    "TestConfig",
    "ThresholdCalibration",
    "adjusted_rand_index",
    "bic_score",
    "calibrate_threshold",
    "calibrate_threshold_detail",
    "complement_basis",
    "default_lambda",
    "detect_multiple",
    "detect_single",
    "estimate_lasso_bic",
    "estimate_proj",
    "estimate_sigma_mad",
    "estimate_threshold_argmax",
    "fit_gev",
    "g_expected",
    "gamma_oracle",
    "generate_intervals",
    "generate_multi",
    "generate_single",
    "hard_threshold",
    "hausdorff",
    "lasso_cd",
    "leading_left_singular_vector",
    "not_segment",
    "prune_candidates",
    "q_matrix",
    "refine_full",
    "refine_midpoint",
    "run_benchmark",
    "scan_window",
    "single_test",
    "sketch",
    "soft_threshold",
]

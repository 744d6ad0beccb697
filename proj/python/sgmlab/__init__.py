"""Python bindings for the sgmlab C++ core."""

from ._core import (
    GmmSpec,
    InvalidArgument,
    NoiseSchedule,
    NumericalFailure,
    UndefinedCorrelation,
    correlations,
    cosine_schedule,
    decompose,
    empirical_score,
    gmm_with_random_means,
    lambda_atoms,
    mst_lifetime_sum,
    positive_magnitude,
    pseudometric_matrix,
    reference_gmm,
    sample_gmm,
    true_score,
    uniform_schedule,
    w2,
)

__all__ = [name for name in dir() if not name.startswith("_")]

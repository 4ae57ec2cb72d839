"""Moment-matching estimation of Q-matrices for DINA and DINO models."""

from .core import (
    BIT_CONVENTION,
    AttributeDistribution,
    AttributeProfile,
    ItemParams,
    Model,
    QMatrix,
    ResponseMatrix,
    canonicalize,
    capability_dina,
    capability_dino,
    capability_matrix,
    equivalent,
    is_complete,
    missing_unit_rows,
)
from .errors import (
    AlignmentError,
    BudgetExceededError,
    ConfigError,
    DimensionError,
    EmptyCandidateSetError,
    QmxError,
)
from .estimation import (
    FitResult,
    SearchConstraints,
    ValidationReport,
    estimate_p,
    fit_item_params,
    search_q,
    split_merge,
    validate_q,
)
from .moments import MomentVector, alpha_vector, beta_vector, empirical_distribution, moment_vector
from .simplex import SimplexLsqSolution, kkt_certificate, min_residual, score
from .simulate import SimConfig, simulate
from .tmatrix import ComboSet, build_T, build_U, default_combos, duality_check, enumerate_combos

__version__ = "0.1.0"

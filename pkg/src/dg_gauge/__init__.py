"""Evaluation measures for domain generalization.

Average, ideal and worst+gap measures over leave-one-environment-out errors,
rank-correlation studies against the ideal measure, synthetic spurious-
correlation worlds with analytic model oracles, and Monte Carlo checks of the
max-of-uniforms results behind worst+gap.
"""

from .errors import (
    DGGaugeError,
    DuplicateRecord,
    GeneratorStarvation,
    IncompleteMatrix,
    InsufficientEnvironments,
    InvalidInput,
    IoError,
    ParseError,
    UndefinedCorrelation,
    ValidationError,
)
from .measures import (
    FullErrorVector,
    LooErrorVector,
    MeasureKind,
    MeasureValue,
    average_measure,
    gap_only_measure,
    ideal_measure,
    select_best,
    worst_gap_measure,
    worst_only_measure,
)
from .rank_correlation import (
    CorrelationResult,
    PairedSample,
    fractional_ranks,
    kendall_tau,
    seed_aggregate,
    spearman_rho,
)

__version__ = "0.1.0"

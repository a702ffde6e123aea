"""Exact tests, p-value distributions, and Monte Carlo combination for
screening baseline tables of randomized trials."""

from .combination import (
    BROWN_CAP,
    CombinationMethod,
    brown_adjust,
    combine,
    fisher_combine,
    log_sum_statistic,
    stouffer_combine,
    stouffer_statistic,
)
from .dataset import (
    DatasetError,
    GroupingError,
    TrialDataset,
    Variable,
    VariableKind,
    apply_tie_adjustment,
    group_categorical,
    parse_csv,
    parse_dataset,
    serialize_dataset,
)
from .distributions import (
    PValueDistribution,
    cdf,
    conditional_distribution,
    curve_csv,
    curve_points,
    expectation,
    unconditional_distribution,
)
from .exact_tests import (
    ContinuousSummary,
    DegenerateTableError,
    Direction,
    PValue,
    TestKind,
    TieTolerance,
    chi_square_p,
    fisher_exact_p,
    fisher_exact_p_rxc,
    reverse_fisher_exact_p,
    t_test_p,
)
from .report import AnalysisConfig, AnalysisReport, analyze_dataset
from .simulation import (
    MonteCarloResult,
    RngSeed,
    exhaustive_combined_p,
    simulate_combined_null,
    simulate_figure6,
)
from .tables import EnumerationCapExceeded, Marginals, Table2x2, TableRxC, marginals

__version__ = "0.1.0"

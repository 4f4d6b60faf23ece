"""Procurement and pricing of differentially private population statistics."""

__version__ = "0.1.0"

from .auction import (
    AuctionOutcome, Consumer, Population, fair_query, is_envy_free, lindahl_procurement,
    min_cost_auction, misreport_gain, verify_individual_rationality,
)
from .cost_model import (
    CostCurve, Empirical, LogNormal, NormalMixture, QuantileModel, c_lindahl, c_vcg,
    dc_lindahl, dc_vcg, model_from_dict, partial_expectation, quantile, sweep,
)
from .dp_core import (
    AccuracyTarget, BitDatabase, PublishedStatistic, cohort_size, dp_certificate,
    empirical_accuracy, epsilon_for, gr_publish, make_accuracy_target, required_cohort,
    true_statistic,
)
from .equilibrium import (
    RegimeComparison, compare_regimes, solve_competitive, solve_lindahl_supply, solve_pareto,
)
from .errors import (
    BudgetError, CohortSizeError, DomainError, MismatchError, ModelError, NoBracketError,
    NonMonotoneWarning, ParseError, ProvisionError, QuadratureError, QuantileDerivativeWarning,
    RangeError, ShapeError, ThresholdError,
)
from .population_io import (
    PopulationConfig, generate_population, load_population, save_population,
)

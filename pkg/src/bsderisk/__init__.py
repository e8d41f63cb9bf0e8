"""Monte Carlo engine and verification harness for dynamic risk measures
driven by backward stochastic differential equations."""

from .tsallis import DomainError, QIndex, exp_q, ln_q
from .stochastic import (
    Claim,
    DiscountCurve,
    LsmcContext,
    PathEnsemble,
    RandomField,
    RegressionBasis,
    SingularRegression,
    TimeGrid,
    claim_from_label,
    evaluate_claim,
    simulate,
)
from .bsde import (
    BSDESolution,
    DomainGuardViolation,
    Driver,
    DriverFamily,
    NonFiniteError,
    SolveOptions,
    check_increasing,
    default_registry_labels,
    driver_from_label,
    family_from_label,
    g_expectation,
    shifted,
    solve,
)
from .riskmeasures import (
    DiscountedMeasure,
    DriverMeasure,
    EntropicMeasure,
    FamilyMeasure,
    MeanMeasure,
    QEntropicClosed,
    QEntropicOnLosses,
    QEntropicOnLossesBSDE,
    RiskMeasure,
    TranslatedQEntropic,
    discounted_wrap,
    entropic,
    measure_from_label,
    q_entropic_closed,
    q_entropic_on_losses,
    rho_from_driver,
    rho_from_family,
    translated_q_entropic,
)
from .diagnostics import (
    DegenerateWeights,
    LongevityResult,
    PropertyReport,
    check_cash_additivity,
    check_cash_subadditivity,
    check_convexity,
    check_longevity,
    check_monotonicity,
    check_normalization,
    check_restriction,
    check_time_consistency,
    gamma,
    gamma_via_premium_measure,
    run_taxonomy,
    taxonomy_rows,
)

__version__ = "0.1.0"

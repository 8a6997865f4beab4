"""Market-mechanism benefit simulation for intersection right-of-way.

Quantifies, per value-of-time level, the expected net personal benefit a
traveler gets under four economic instruments (first-price auction,
second-price auction, credit scheme, direct transaction) across honest,
abandonment, and dishonest-reporting behavior.
"""

__version__ = "0.1.0"

from .distributions import (
    LogNormalParams,
    PopulationModel,
    QuantileSpec,
    fit_from_quantiles,
)
from .mechanisms import (
    CreditPolicy,
    GameInstance,
    MechanismKind,
    MechanismSpec,
    Settlement,
    VehicleState,
    settle_abandonment,
    settle_dishonest,
    settle_honest,
)
from .expectation import (
    Abandonment,
    CreditAccounts,
    Dishonest,
    ExpectedBenefitQuery,
    Honest,
    VotProfile,
    compute_credit_accounts,
    expected_basic_benefit,
    expected_benefit_mc,
    expected_benefit_quadrature,
    expected_extra_benefit,
)
from .dynamics import (
    DynamicsReport,
    NonConvergenceError,
    StrategyProfile,
    abandonment_equilibrium,
    dishonest_iteration,
    equilibrium_extra_benefit_curve,
)
from .experiments import (
    CurveTable,
    Route,
    Scenario,
    ScenarioConfig,
    run_abandonment,
    run_dishonest,
    run_honest,
)

__all__ = [
    "__version__",
    "LogNormalParams",
    "PopulationModel",
    "QuantileSpec",
    "fit_from_quantiles",
    "CreditPolicy",
    "GameInstance",
    "MechanismKind",
    "MechanismSpec",
    "Settlement",
    "VehicleState",
    "settle_abandonment",
    "settle_dishonest",
    "settle_honest",
    "Abandonment",
    "CreditAccounts",
    "Dishonest",
    "ExpectedBenefitQuery",
    "Honest",
    "VotProfile",
    "compute_credit_accounts",
    "expected_basic_benefit",
    "expected_benefit_mc",
    "expected_benefit_quadrature",
    "expected_extra_benefit",
    "DynamicsReport",
    "NonConvergenceError",
    "StrategyProfile",
    "abandonment_equilibrium",
    "dishonest_iteration",
    "equilibrium_extra_benefit_curve",
    "CurveTable",
    "Route",
    "Scenario",
    "ScenarioConfig",
    "run_abandonment",
    "run_dishonest",
    "run_honest",
]

"""Scenario runner: binds distributions, mechanisms, expectation and dynamics
into the three named studies and produces plot-ready curve tables.

Each table row is one VOT level; columns hold the expected extra benefit per
mechanism, with the population CDF of VOT alongside as the figure background.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .distributions import PopulationModel, cdf, quantile
from .mechanisms import CreditPolicy, MechanismKind, MechanismSpec
from .expectation import (
    Dishonest,
    ExpectedBenefitQuery,
    Honest,
    compute_credit_accounts,
    derive_rng,
    expected_basic_benefit,
    expected_benefit_mc,
    expected_benefit_quadrature,
    subject_credit,
)
from .dynamics import (
    Converged,
    Cycle,
    DynamicsReport,
    IterationCap,
    NonConvergenceError,
    abandonment_equilibrium,
    dishonest_iteration,
    equilibrium_extra_benefit_curve,
)
from . import expectation as _expectation

__all__ = [
    "Scenario",
    "Route",
    "ScenarioConfig",
    "CurveTable",
    "ScenarioResult",
    "MECHANISM_LABELS",
    "default_mechanism_labels",
    "mechanism_from_label",
    "curve_vot_grid",
    "run_honest",
    "run_abandonment",
    "run_dishonest",
    "run_scenario",
]

# Curve rows span these f_v quantiles, log-spaced.
CURVE_SPAN = (0.005, 0.995)


class Scenario(enum.Enum):
    HONEST = "honest"
    ABANDONMENT = "abandonment"
    DISHONEST = "dishonest"


class Route(enum.Enum):
    MONTE_CARLO = "mc"
    QUADRATURE = "quad"
    BOTH = "both"


MECHANISM_LABELS = (
    "first_price",
    "second_price",
    "credit_all",
    "credit_joiners",
    "transaction_chi0",
    "transaction_chi1",
)

_BASE_LABELS = ("first_price", "second_price", "credit_all", "transaction_chi0", "transaction_chi1")


def default_mechanism_labels(scenario: Scenario) -> tuple[str, ...]:
    if scenario is Scenario.ABANDONMENT:
        return (
            "first_price",
            "second_price",
            "credit_all",
            "credit_joiners",
            "transaction_chi0",
            "transaction_chi1",
        )
    return _BASE_LABELS


def mechanism_from_label(label: str, *, p_priority_a: float = 0.5, credit_loss_rate: float = 0.10) -> MechanismSpec:
    common = dict(p_priority_a=p_priority_a, credit_loss_rate=credit_loss_rate)
    if label == "first_price":
        return MechanismSpec(MechanismKind.FIRST_PRICE, **common)
    if label == "second_price":
        return MechanismSpec(MechanismKind.SECOND_PRICE, **common)
    if label == "credit_all":
        return MechanismSpec(
            MechanismKind.CREDIT_SECOND_PRICE, credit_policy=CreditPolicy.ALL_TRAVELERS, **common
        )
    if label == "credit_joiners":
        return MechanismSpec(
            MechanismKind.CREDIT_SECOND_PRICE, credit_policy=CreditPolicy.JOINERS_ONLY, **common
        )
    if label == "transaction_chi0":
        return MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=0, **common)
    if label == "transaction_chi1":
        return MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=1, **common)
    raise ValueError(f"unknown mechanism label {label!r}; known: {', '.join(MECHANISM_LABELS)}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one scenario run needs besides the population model."""

    scenario: Scenario
    seed: int
    mechanisms: tuple[str, ...] = ()
    vot_curve_grid: int = 101
    n_samples: int = 100_000
    numeric_route: Route = Route.QUADRATURE
    p_priority_a: float = 0.5
    credit_loss_rate: float = 0.10
    quad_nodes: int = 128
    dynamics_quad_nodes: int = 64
    damping: float = 0.5
    max_iter: int = 200

    def __post_init__(self) -> None:
        if self.vot_curve_grid < 3:
            raise ValueError(f"vot_curve_grid must be >= 3, got {self.vot_curve_grid}")
        if self.numeric_route in (Route.MONTE_CARLO, Route.BOTH) and self.n_samples < 1000:
            raise ValueError(f"n_samples must be >= 1000 with a Monte Carlo route, got {self.n_samples}")
        if not self.mechanisms:
            object.__setattr__(self, "mechanisms", default_mechanism_labels(self.scenario))
        for label in self.mechanisms:
            if label not in MECHANISM_LABELS:
                raise ValueError(f"unknown mechanism label {label!r}")

    def mechanism_spec(self, label: str) -> MechanismSpec:
        return mechanism_from_label(
            label, p_priority_a=self.p_priority_a, credit_loss_rate=self.credit_loss_rate
        )


@dataclass(frozen=True)
class CurveTable:
    """Columns of equal-length arrays; always starts with vot, vot_cdf."""

    columns: tuple[str, ...]
    data: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.columns[:2] != ("vot", "vot_cdf"):
            raise ValueError("table must start with vot, vot_cdf")
        n = self.data["vot"].size
        for name in self.columns:
            if name not in self.data or self.data[name].size != n:
                raise ValueError(f"column {name!r} missing or wrong length")
        for axis in ("vot", "vot_cdf"):
            if np.any(np.diff(self.data[axis]) <= 0.0):
                raise ValueError(f"{axis} must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    @property
    def n_rows(self) -> int:
        return self.data["vot"].size


@dataclass
class ScenarioResult:
    scenario: Scenario
    table: CurveTable
    summaries: dict[str, dict] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def curve_vot_grid(population: PopulationModel, size: int) -> np.ndarray:
    lo = quantile(population.vot, CURVE_SPAN[0])
    hi = quantile(population.vot, CURVE_SPAN[1])
    return np.exp(np.linspace(np.log(lo), np.log(hi), int(size)))


def _assemble_table(
    grid: np.ndarray,
    population: PopulationModel,
    route: Route,
    per_mech: dict[str, dict[str, np.ndarray]],
    labels: tuple[str, ...],
) -> CurveTable:
    columns = ["vot", "vot_cdf"]
    data = {"vot": grid, "vot_cdf": np.asarray(cdf(population.vot, grid))}
    for label in labels:
        if label not in per_mech:
            continue
        cols = per_mech[label]
        if route is Route.QUADRATURE:
            columns.append(label)
            data[label] = cols["quad"]
        elif route is Route.MONTE_CARLO:
            columns.append(label)
            data[label] = cols["mc"]
        else:
            for suffix in ("quad", "mc", "mc_se", "diff"):
                columns.append(f"{label}_{suffix}")
                data[f"{label}_{suffix}"] = cols[suffix]
    return CurveTable(tuple(columns), data)


def _mc_extra_curve(
    config: ScenarioConfig,
    population: PopulationModel,
    label: str,
    grid: np.ndarray,
    regime_for_row,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo extra-benefit column: one named substream per mechanism."""
    spec = config.mechanism_spec(label)
    rng = derive_rng(config.seed, config.scenario.value, label, "curve")
    accounts = None
    if spec.kind is MechanismKind.CREDIT_SECOND_PRICE:
        credit_rng = derive_rng(config.seed, config.scenario.value, label, "credit")
        accounts = compute_credit_accounts(
            spec, population, regime_for_row(grid[0]), n_samples=config.n_samples, rng=credit_rng
        )
    est = np.empty(grid.size)
    se = np.empty(grid.size)
    for i, v in enumerate(grid):
        regime = regime_for_row(v)
        query = ExpectedBenefitQuery(v, spec, population, regime)
        mean, err = expected_benefit_mc(query, config.n_samples, rng)
        if accounts is not None:
            mean += subject_credit(accounts, spec, regime)
        est[i] = mean - expected_basic_benefit(v, population, config.p_priority_a)
        se[i] = err
    return est, se


def run_honest(config: ScenarioConfig, population: PopulationModel) -> CurveTable:
    """Expected extra benefit per VOT level with truthful, full participation."""
    if config.scenario is not Scenario.HONEST:
        raise ValueError(f"config.scenario must be HONEST, got {config.scenario}")
    grid = curve_vot_grid(population, config.vot_curve_grid)
    per_mech: dict[str, dict[str, np.ndarray]] = {}
    for label in config.mechanisms:
        spec = config.mechanism_spec(label)
        cols: dict[str, np.ndarray] = {}
        if config.numeric_route in (Route.QUADRATURE, Route.BOTH):
            accounts = None
            if spec.kind is MechanismKind.CREDIT_SECOND_PRICE:
                accounts = compute_credit_accounts(spec, population, Honest(), grid=config.quad_nodes)
            quad = np.empty(grid.size)
            for i, v in enumerate(grid):
                query = ExpectedBenefitQuery(v, spec, population, Honest())
                est = expected_benefit_quadrature(query, config.quad_nodes)
                if accounts is not None:
                    est += subject_credit(accounts, spec, Honest())
                quad[i] = est - expected_basic_benefit(v, population, config.p_priority_a)
            cols["quad"] = quad
        if config.numeric_route in (Route.MONTE_CARLO, Route.BOTH):
            cols["mc"], cols["mc_se"] = _mc_extra_curve(
                config, population, label, grid, lambda v: Honest()
            )
        if config.numeric_route is Route.BOTH:
            cols["diff"] = cols["mc"] - cols["quad"]
        per_mech[label] = cols
    return _assemble_table(grid, population, config.numeric_route, per_mech, config.mechanisms)


def _terminal_profile(report: DynamicsReport):
    terminal = report.terminal
    if isinstance(terminal, Converged):
        return terminal.profile
    if isinstance(terminal, Cycle):
        return terminal.profiles[-1]
    return terminal.profile


def _dynamics_summary(report: DynamicsReport) -> dict:
    terminal = report.terminal
    profile = _terminal_profile(report)
    kind = type(terminal).__name__.lower()
    summary = {
        "terminal": "iteration_cap" if isinstance(terminal, IterationCap) else kind,
        "iterations": len(report.history) - 1,
        "participation_fraction": float(np.mean(profile.participation)),
    }
    if isinstance(terminal, Cycle):
        summary["cycle_period"] = terminal.period
    return summary


def run_abandonment(
    config: ScenarioConfig, population: PopulationModel
) -> tuple[CurveTable, dict[str, dict], dict[str, str]]:
    """Leave/stay equilibrium per mechanism plus the terminal benefit curves.

    Returns (table, summaries, failures); a mechanism that hit the iteration
    cap appears in failures and contributes no column.
    """
    if config.scenario is not Scenario.ABANDONMENT:
        raise ValueError(f"config.scenario must be ABANDONMENT, got {config.scenario}")
    grid = curve_vot_grid(population, config.vot_curve_grid)
    per_mech: dict[str, dict[str, np.ndarray]] = {}
    summaries: dict[str, dict] = {}
    failures: dict[str, str] = {}
    for label in config.mechanisms:
        spec = config.mechanism_spec(label)
        report = abandonment_equilibrium(
            spec,
            population,
            max_iter=config.max_iter,
            quad_nodes=config.dynamics_quad_nodes,
            grid=grid,
        )
        summaries[label] = _dynamics_summary(report)
        try:
            quad = equilibrium_extra_benefit_curve(
                report, spec, population, quad_nodes=config.dynamics_quad_nodes
            )
        except NonConvergenceError as exc:
            failures[label] = str(exc)
            continue
        cols = {"quad": quad}
        if config.numeric_route in (Route.MONTE_CARLO, Route.BOTH):
            profile = _terminal_profile(report)
            participation = profile.participation_profile()

            def regime_for_row(v, _p=participation):
                gamma = int(_p.lookup(v))
                return _expectation.Abandonment(_p, subject_gamma=gamma)

            mc, se = _mc_extra_curve(config, population, label, grid, regime_for_row)
            cols["mc"], cols["mc_se"] = mc, se
            if config.numeric_route is Route.BOTH:
                cols["diff"] = cols["mc"] - cols["quad"]
        per_mech[label] = cols
    table = _assemble_table(grid, population, config.numeric_route, per_mech, config.mechanisms)
    return table, summaries, failures


def run_dishonest(
    config: ScenarioConfig, population: PopulationModel
) -> tuple[CurveTable, dict[str, dict], dict[str, str]]:
    """False-reporting iteration per mechanism plus terminal benefit curves."""
    if config.scenario is not Scenario.DISHONEST:
        raise ValueError(f"config.scenario must be DISHONEST, got {config.scenario}")
    grid = curve_vot_grid(population, config.vot_curve_grid)
    per_mech: dict[str, dict[str, np.ndarray]] = {}
    summaries: dict[str, dict] = {}
    failures: dict[str, str] = {}
    max_iter = max(config.max_iter, 20)
    for label in config.mechanisms:
        spec = config.mechanism_spec(label)
        report = dishonest_iteration(
            spec,
            population,
            report_grid=max(config.vot_curve_grid, 32),
            max_iter=max_iter,
            damping=config.damping,
            quad_nodes=config.dynamics_quad_nodes,
            grid=grid,
        )
        summaries[label] = _dynamics_summary(report)
        try:
            quad = equilibrium_extra_benefit_curve(
                report, spec, population, quad_nodes=config.dynamics_quad_nodes
            )
        except NonConvergenceError as exc:
            failures[label] = str(exc)
            continue
        cols = {"quad": quad}
        if config.numeric_route in (Route.MONTE_CARLO, Route.BOTH):
            profile = _terminal_profile(report)
            reports_map = profile.report_profile()

            def regime_for_row(v, _r=reports_map):
                return Dishonest(_r, subject_report=float(_r.lookup(v)))

            mc, se = _mc_extra_curve(config, population, label, grid, regime_for_row)
            cols["mc"], cols["mc_se"] = mc, se
            if config.numeric_route is Route.BOTH:
                cols["diff"] = cols["mc"] - cols["quad"]
        per_mech[label] = cols
    table = _assemble_table(grid, population, config.numeric_route, per_mech, config.mechanisms)
    return table, summaries, failures


def run_scenario(config: ScenarioConfig, population: PopulationModel) -> ScenarioResult:
    if config.scenario is Scenario.HONEST:
        return ScenarioResult(config.scenario, run_honest(config, population))
    if config.scenario is Scenario.ABANDONMENT:
        table, summaries, failures = run_abandonment(config, population)
    else:
        table, summaries, failures = run_dishonest(config, population)
    return ScenarioResult(config.scenario, table, summaries, failures)

"""Population-level strategy iteration over a discretized VOT grid.

Two dynamics, both synchronous mean-field best response:

* participation (leave/stay) choices when travelers may abandon the market
  mechanism for the traditional coin-flip control, and
* reported-VOT choices when travelers may bid on false VOTs.

Each grid point optimizes against the opponent distribution induced by the
whole current profile. Iteration stops on an exact fixed point, a detected
cycle, or the iteration cap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import PopulationModel, quantile
from .mechanisms import CreditPolicy, MechanismKind, MechanismSpec
from .expectation import (
    Abandonment,
    Dishonest,
    ExpectedBenefitQuery,
    VotProfile,
    _inner_nodes,
    _opponent_nodes,
    _quad_benefit,
    _split_moments,
    compute_credit_accounts,
    expected_basic_benefit,
    lognormal_atoms,
    subject_credit,
)

__all__ = [
    "StrategyProfile",
    "Converged",
    "Cycle",
    "IterationCap",
    "DynamicsReport",
    "NonConvergenceError",
    "vot_grid",
    "abandonment_equilibrium",
    "dishonest_iteration",
    "equilibrium_extra_benefit_curve",
]

# Profiles are compared exactly after rounding reports to this many decimals.
_ROUND_DECIMALS = 9
# A profile repeating within this many sweeps counts as a cycle.
_CYCLE_WINDOW = 8
# Strict-preference margin for the binary participation choice; comparisons
# of two numerical integrals within this band count as ties (resolved to
# gamma = 0).
_TIE_EPS = 1e-12

# Candidate reported VOTs span these f_v quantiles; default dynamics grids
# sit strictly inside, so every grid point has candidates below and above.
_REPORT_SPAN = (1e-3, 1.0 - 1e-3)
_GRID_SPAN = (5e-3, 1.0 - 5e-3)


class NonConvergenceError(RuntimeError):
    """Raised when a dynamics run hit its iteration cap."""


@dataclass(frozen=True)
class StrategyProfile:
    """Per-VOT-level strategy state: participation flag and reported VOT."""

    vot_grid: np.ndarray
    participation: np.ndarray
    reported_vot: np.ndarray
    iteration: int

    def __post_init__(self) -> None:
        grid = np.asarray(self.vot_grid, dtype=float)
        part = np.asarray(self.participation, dtype=int)
        rep = np.asarray(self.reported_vot, dtype=float)
        if grid.ndim != 1 or np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
            raise ValueError("vot_grid must be strictly increasing and positive")
        if part.shape != grid.shape or rep.shape != grid.shape:
            raise ValueError("participation and reported_vot must match the grid shape")
        if np.any((part != 0) & (part != 1)):
            raise ValueError("participation entries must be 0 or 1")
        if np.any(rep <= 0.0):
            raise ValueError("reported_vot entries must be > 0")
        object.__setattr__(self, "vot_grid", grid)
        object.__setattr__(self, "participation", part)
        object.__setattr__(self, "reported_vot", rep)

    def participation_profile(self) -> VotProfile:
        return VotProfile(self.vot_grid, self.participation.astype(float))

    def report_profile(self) -> VotProfile:
        return VotProfile(self.vot_grid, self.reported_vot)

    def key(self) -> bytes:
        rounded = np.round(self.reported_vot, _ROUND_DECIMALS)
        return self.participation.astype(np.int8).tobytes() + rounded.tobytes()


@dataclass(frozen=True)
class Converged:
    profile: StrategyProfile


@dataclass(frozen=True)
class Cycle:
    period: int
    profiles: tuple[StrategyProfile, ...]


@dataclass(frozen=True)
class IterationCap:
    profile: StrategyProfile


@dataclass(frozen=True)
class DynamicsReport:
    """Iteration trace: every profile visited, the terminal state, and the
    expected extra-benefit curve recorded at each profile."""

    dynamic: str
    history: tuple[StrategyProfile, ...]
    terminal: Converged | Cycle | IterationCap
    extra_benefit_history: tuple[np.ndarray, ...]


def vot_grid(
    population: PopulationModel, size: int, q_lo: float = _GRID_SPAN[0], q_hi: float = _GRID_SPAN[1]
) -> np.ndarray:
    """Log-spaced VOT levels spanning the given f_v quantile range."""
    if size < 2:
        raise ValueError(f"size must be >= 2, got {size}")
    lo = quantile(population.vot, q_lo)
    hi = quantile(population.vot, q_hi)
    return np.exp(np.linspace(np.log(lo), np.log(hi), int(size)))


def _check_terminal(history: list[StrategyProfile], keys: list[bytes]):
    """Fixed point / cycle detection over the trailing window."""
    i = len(keys) - 1
    for j in range(i - 1, max(-1, i - 1 - _CYCLE_WINDOW), -1):
        if keys[j] == keys[i]:
            period = i - j
            if period == 1:
                return Converged(history[i])
            return Cycle(period, tuple(history[j:i]))
    return None


# ---------------------------------------------------------------------------
# Abandonment dynamic


def _abandonment_values(
    grid: np.ndarray,
    participation: np.ndarray,
    mechanism: MechanismSpec,
    population: PopulationModel,
    n: int,
):
    """Expected benefit of joining (b1) and of staying out (b0) per grid point.

    Both branches integrate over the same truncated measure, so a fully
    abandoned population yields an exact tie. Credit terms follow the
    policy: distributed to everyone, or to joiners only.
    """
    profile = VotProfile(grid, participation.astype(float))
    regime_in = Abandonment(profile, subject_gamma=1)
    regime_out = Abandonment(profile, subject_gamma=0)
    b1 = np.array(
        [_quad_benefit(ExpectedBenefitQuery(v, mechanism, population, regime_in), n) for v in grid]
    )
    b0 = np.array(
        [_quad_benefit(ExpectedBenefitQuery(v, mechanism, population, regime_out), n) for v in grid]
    )
    if mechanism.kind is MechanismKind.CREDIT_SECOND_PRICE:
        accounts = compute_credit_accounts(mechanism, population, regime_in, grid=n)
        net = accounts.per_capita_credit - accounts.expected_trading_loss
        b1 = b1 + net
        if mechanism.credit_policy is CreditPolicy.ALL_TRAVELERS:
            b0 = b0 + net
    return b1, b0


def abandonment_equilibrium(
    mechanism: MechanismSpec,
    population: PopulationModel,
    grid_size: int = 48,
    max_iter: int = 200,
    *,
    quad_nodes: int = 64,
    grid: np.ndarray | None = None,
    initial_participation: np.ndarray | None = None,
) -> DynamicsReport:
    """Synchronous best-response iteration of the leave/stay choice.

    A grid point joins only when joining strictly beats the p_A coin given
    the current population participation; ties go to leaving. Starts from
    full participation unless told otherwise.
    """
    if grid is None:
        if grid_size < 32:
            raise ValueError(f"grid_size must be >= 32, got {grid_size}")
        grid = vot_grid(population, grid_size)
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    grid = np.asarray(grid, dtype=float)
    participation = (
        np.ones(grid.size, dtype=int)
        if initial_participation is None
        else np.asarray(initial_participation, dtype=int)
    )

    basic = np.array([expected_basic_benefit(v, population, mechanism.p_priority_a) for v in grid])
    history = [StrategyProfile(grid, participation, grid.copy(), 0)]
    keys = [history[0].key()]
    extras: list[np.ndarray] = []
    terminal = None

    for it in range(1, max_iter + 1):
        current = history[-1]
        b1, b0 = _abandonment_values(grid, current.participation, mechanism, population, quad_nodes)
        extras.append(np.where(current.participation == 1, b1, b0) - basic)

        margin = _TIE_EPS * (1.0 + np.abs(b0))
        new_part = np.where(b1 > b0 + margin, 1, 0)
        profile = StrategyProfile(grid, new_part, grid.copy(), it)
        history.append(profile)
        keys.append(profile.key())
        terminal = _check_terminal(history, keys)
        if terminal is not None:
            break

    # extra-benefit curve for the final profile, aligning both histories
    last = history[-1]
    b1, b0 = _abandonment_values(grid, last.participation, mechanism, population, quad_nodes)
    extras.append(np.where(last.participation == 1, b1, b0) - basic)

    if terminal is None:
        terminal = IterationCap(history[-1])
    return DynamicsReport("abandonment", tuple(history), terminal, tuple(extras))


# ---------------------------------------------------------------------------
# Dishonest-reporting dynamic


def _report_candidates(population: PopulationModel, size: int, grid: np.ndarray) -> np.ndarray:
    """Log-spaced candidate bids; the true grid is merged in so the truthful
    profile is exactly representable."""
    span = vot_grid(population, size, *_REPORT_SPAN)
    return np.unique(np.concatenate([span, grid]))


def _dishonest_candidate_stats(
    mechanism: MechanismSpec,
    candidates: np.ndarray,
    population: PopulationModel,
    nodes,
    n: int,
):
    """Per-candidate moments of the dishonest settlement.

    A subject's expected benefit is affine in its true VOT once the candidate
    bid is fixed: benefit(v, k) = v * win_t[k] + offset[k].
    """
    t_a, u_a = lognormal_atoms(population.time_saving, n)
    ut = u_a * t_a
    k_inner = _inner_nodes(n)
    win_t = np.empty(candidates.size)
    offset = np.empty(candidates.size)
    for k, b in enumerate(candidates):
        win_mass, pay, recv = _split_moments(
            mechanism, b * t_a, nodes, nodes.w, population.time_saving, k_inner
        )
        win_t[k] = float(ut @ win_mass)
        offset[k] = float(u_a @ (recv - pay))
    return win_t, offset


def _dishonest_profile_extras(
    grid: np.ndarray,
    reports: np.ndarray,
    mechanism: MechanismSpec,
    population: PopulationModel,
    n: int,
    basic: np.ndarray,
) -> np.ndarray:
    """Expected extra benefit of each grid point at its current report."""
    rep_profile = VotProfile(grid, reports)
    regime = Dishonest(rep_profile)
    nodes = _opponent_nodes(population, regime, n)
    t_a, u_a = lognormal_atoms(population.time_saving, n)
    k_inner = _inner_nodes(n)

    values = np.empty(grid.size)
    for g in range(grid.size):
        win_mass, pay, recv = _split_moments(
            mechanism, reports[g] * t_a, nodes, nodes.w, population.time_saving, k_inner
        )
        values[g] = float(u_a @ (grid[g] * t_a * win_mass - pay + recv))

    if mechanism.kind is MechanismKind.CREDIT_SECOND_PRICE:
        accounts = compute_credit_accounts(mechanism, population, regime, grid=n)
        values += subject_credit(accounts, mechanism, regime)
    return values - basic


def dishonest_iteration(
    mechanism: MechanismSpec,
    population: PopulationModel,
    report_grid: int = 48,
    max_iter: int = 60,
    damping: float = 0.5,
    *,
    quad_nodes: int = 64,
    grid: np.ndarray | None = None,
    initial_reports: np.ndarray | None = None,
) -> DynamicsReport:
    """Synchronous damped best response of reported VOTs, truthful start.

    Every grid point picks the candidate bid maximizing its expected
    settlement against the current population reports, then moves a
    `damping` fraction of the way there.
    """
    if grid is None:
        if report_grid < 32:
            raise ValueError(f"report_grid must be >= 32, got {report_grid}")
        grid = vot_grid(population, report_grid)
    if max_iter < 20:
        raise ValueError(f"max_iter must be >= 20, got {max_iter}")
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    grid = np.asarray(grid, dtype=float)
    candidates = _report_candidates(population, max(int(report_grid), 32), grid)
    reports = grid.copy() if initial_reports is None else np.asarray(initial_reports, dtype=float)

    basic = np.array([expected_basic_benefit(v, population, mechanism.p_priority_a) for v in grid])
    ones = np.ones(grid.size, dtype=int)

    history = [StrategyProfile(grid, ones, reports, 0)]
    keys = [history[0].key()]
    extras: list[np.ndarray] = []
    terminal = None

    for it in range(1, max_iter + 1):
        current = history[-1]
        extras.append(
            _dishonest_profile_extras(grid, current.reported_vot, mechanism, population, quad_nodes, basic)
        )

        nodes = _opponent_nodes(population, Dishonest(current.report_profile()), quad_nodes)
        win_t, offset = _dishonest_candidate_stats(mechanism, candidates, population, nodes, quad_nodes)
        benefit = grid[:, None] * win_t[None, :] + offset[None, :]
        best = candidates[np.argmax(benefit, axis=1)]
        new_reports = damping * best + (1.0 - damping) * current.reported_vot

        profile = StrategyProfile(grid, ones, new_reports, it)
        history.append(profile)
        keys.append(profile.key())
        terminal = _check_terminal(history, keys)
        if terminal is not None:
            break

    last = history[-1]
    extras.append(
        _dishonest_profile_extras(grid, last.reported_vot, mechanism, population, quad_nodes, basic)
    )
    if terminal is None:
        terminal = IterationCap(history[-1])
    return DynamicsReport("dishonest", tuple(history), terminal, tuple(extras))


# ---------------------------------------------------------------------------
# Equilibrium curves


def _profile_extras(
    dynamic: str,
    profile: StrategyProfile,
    mechanism: MechanismSpec,
    population: PopulationModel,
    quad_nodes: int,
) -> np.ndarray:
    grid = profile.vot_grid
    basic = np.array([expected_basic_benefit(v, population, mechanism.p_priority_a) for v in grid])
    if dynamic == "abandonment":
        b1, b0 = _abandonment_values(grid, profile.participation, mechanism, population, quad_nodes)
        return np.where(profile.participation == 1, b1, b0) - basic
    if dynamic == "dishonest":
        return _dishonest_profile_extras(
            grid, profile.reported_vot, mechanism, population, quad_nodes, basic
        )
    raise ValueError(f"unknown dynamic {dynamic!r}")


def equilibrium_extra_benefit_curve(
    report: DynamicsReport,
    mechanism: MechanismSpec,
    population: PopulationModel,
    *,
    quad_nodes: int = 64,
) -> np.ndarray:
    """Per-grid-point expected extra benefit at the terminal profile.

    Cycle terminals yield the arithmetic mean of the curves over one period.
    Raises NonConvergenceError for an iteration-cap terminal.
    """
    terminal = report.terminal
    if isinstance(terminal, IterationCap):
        raise NonConvergenceError(
            f"{report.dynamic} dynamics hit the iteration cap after {len(report.history) - 1} sweeps"
        )
    if isinstance(terminal, Converged):
        return _profile_extras(report.dynamic, terminal.profile, mechanism, population, quad_nodes)
    curves = [
        _profile_extras(report.dynamic, p, mechanism, population, quad_nodes)
        for p in terminal.profiles
    ]
    return np.mean(curves, axis=0)

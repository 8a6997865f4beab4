"""Expected per-game benefits by VOT level, via two independent numeric routes.

The Monte Carlo route samples games and settles them with the vectorized
settlement rules. The quadrature route integrates payoff kernels against
truncated log-normal measures: the opponent's time-saving dimension is split
exactly at the win/lose boundary, and step-function strategy maps are
integrated cell by cell, so every piece is smooth and Gauss-Legendre
converges fast. The two routes share no estimation code and are
cross-checked in the tests.

Credit-scheme accounting (per-capita credit C and trading loss L) lives here
because it is population-level bookkeeping, not part of any single game.
One credit is valued at one cent throughout.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from .distributions import LogNormalParams, PopulationModel
from .mechanisms import (
    CreditPolicy,
    MechanismKind,
    MechanismSpec,
    settle_dishonest_arrays,
    settle_honest_arrays,
)

__all__ = [
    "VotProfile",
    "Honest",
    "Abandonment",
    "Dishonest",
    "ExpectedBenefitQuery",
    "CreditAccounts",
    "expected_benefit_mc",
    "expected_benefit_quadrature",
    "expected_basic_benefit",
    "expected_extra_benefit",
    "compute_credit_accounts",
    "subject_credit",
    "win_probability",
    "lognormal_atoms",
    "pairwise_mean_min",
    "derive_rng",
]

# Quadrature truncates each log-normal at these quantiles. 1e-10 keeps the
# neglected tail contribution to any benefit near 1e-7 cents, well inside
# every tolerance used downstream.
TRUNCATION_Q = 1e-10

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MC_BLOCK = 1 << 16


def derive_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the named substream of a single master seed.

    The name parts are hashed, so streams for distinct purposes are
    statistically independent and stable across processes.
    """
    digest = hashlib.sha256("/".join(str(p) for p in names).encode()).digest()
    words = tuple(int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + words))


# ---------------------------------------------------------------------------
# Strategy maps and regimes


@dataclass(frozen=True)
class VotProfile:
    """Step function over VOT levels (cells split at geometric midpoints)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be a strictly increasing 1-d array of positive VOTs")
        if values.shape != grid.shape:
            raise ValueError("values must match the grid shape")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def cell_edges(self) -> np.ndarray:
        """Interior cell boundaries (geometric midpoints between grid points)."""
        return np.sqrt(self.grid[:-1] * self.grid[1:])

    def lookup(self, vot):
        idx = np.searchsorted(self.cell_edges(), np.asarray(vot, dtype=float), side="right")
        out = self.values[idx]
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Honest:
    """Everyone participates and bids their true VOT."""


@dataclass(frozen=True)
class Abandonment:
    """Opt-out regime: the population's participation choice per VOT level.

    subject_gamma is the subject's own choice; a game happens only when both
    sides participate, otherwise priority falls to the p_A coin.
    """

    participation: VotProfile
    subject_gamma: int = 1

    def __post_init__(self) -> None:
        if self.subject_gamma not in (0, 1):
            raise ValueError(f"subject_gamma must be 0 or 1, got {self.subject_gamma}")
        if np.any((self.participation.values != 0.0) & (self.participation.values != 1.0)):
            raise ValueError("participation values must be 0 or 1")


@dataclass(frozen=True)
class Dishonest:
    """No opt-out; the population reports VOTs through `reports`.

    subject_report overrides the subject's own reported VOT (defaults to the
    population map evaluated at the subject's true VOT).
    """

    reports: VotProfile
    subject_report: float | None = None

    def __post_init__(self) -> None:
        if np.any(self.reports.values <= 0.0):
            raise ValueError("reported VOTs must be > 0")
        if self.subject_report is not None and not self.subject_report > 0.0:
            raise ValueError(f"subject_report must be > 0, got {self.subject_report}")


Regime = Honest | Abandonment | Dishonest


@dataclass(frozen=True)
class ExpectedBenefitQuery:
    """Expected-benefit question: a subject VOT against the population."""

    fixed_vot_a: float
    mechanism: MechanismSpec
    population: PopulationModel
    regime: Regime = field(default_factory=Honest)

    def __post_init__(self) -> None:
        if not self.fixed_vot_a > 0.0:
            raise ValueError(f"fixed_vot_a must be > 0, got {self.fixed_vot_a}")


@dataclass(frozen=True)
class CreditAccounts:
    """Per-recipient credit C and the expected trading loss E L = loss_rate * C."""

    per_capita_credit: float
    expected_trading_loss: float


# ---------------------------------------------------------------------------
# Quadrature building blocks


@lru_cache(maxsize=32)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _norm_pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def lognormal_atoms(params: LogNormalParams, n: int, q_lo: float = TRUNCATION_Q, q_hi: float = 1.0 - TRUNCATION_Q):
    """Gauss-Legendre atoms (values, weights) for E[g(X)] under a log-normal.

    Nodes live in standard-normal z space between the q_lo and q_hi quantiles,
    with the Gaussian density folded into the weights; weights sum to the
    truncated mass, slightly below 1.
    """
    z_lo, z_hi = ndtri(q_lo), ndtri(q_hi)
    nodes, gl_w = _leggauss(int(n))
    half = 0.5 * (z_hi - z_lo)
    z = half * nodes + 0.5 * (z_hi + z_lo)
    w = half * gl_w * _norm_pdf(z)
    x = np.exp(params.mu + params.sigma * z)
    return x, w


def _gl_segment_atoms(params: LogNormalParams, z_lo: float, z_hi: float, n: int):
    """Atoms on one z-space segment of a log-normal."""
    nodes, gl_w = _leggauss(int(n))
    half = 0.5 * (z_hi - z_lo)
    z = half * nodes + 0.5 * (z_hi + z_lo)
    w = half * gl_w * _norm_pdf(z)
    return np.exp(params.mu + params.sigma * z), w


@dataclass(frozen=True)
class OpponentNodes:
    """Opponent-side integration nodes over V_B.

    `bid_vot` is what the opponent's bid is built from (true VOT, or the
    reported VOT for a whole profile cell), `w` the node weight, and `gamma`
    the participation flag. Nodes with exact cell masses carry the cell's
    constant report as bid_vot.
    """

    bid_vot: np.ndarray
    w: np.ndarray
    gamma: np.ndarray


def _z_of(params: LogNormalParams, x: np.ndarray) -> np.ndarray:
    return (np.log(x) - params.mu) / params.sigma


def _opponent_nodes(population: PopulationModel, regime: Regime, n: int) -> OpponentNodes:
    vot_lp = population.vot
    z_lo, z_hi = ndtri(TRUNCATION_Q), ndtri(1.0 - TRUNCATION_Q)

    if isinstance(regime, Honest):
        v, w = _gl_segment_atoms(vot_lp, z_lo, z_hi, n)
        return OpponentNodes(v, w, np.ones_like(v))

    if isinstance(regime, Dishonest):
        # The subject's payoff depends on the opponent only through its
        # reported bid, constant per profile cell: exact cell masses suffice.
        edges = np.clip(_z_of(vot_lp, regime.reports.cell_edges()), z_lo, z_hi)
        bounds = np.concatenate([[z_lo], edges, [z_hi]])
        w = np.diff(ndtr(bounds))
        return OpponentNodes(regime.reports.values.copy(), w, np.ones_like(w))

    if isinstance(regime, Abandonment):
        # Participation is piecewise constant; integrate each maximal
        # constant-gamma block with its own Gauss-Legendre rule.
        profile = regime.participation
        edges = np.clip(_z_of(vot_lp, profile.cell_edges()), z_lo, z_hi)
        bounds = np.concatenate([[z_lo], edges, [z_hi]])
        flags = profile.values
        blocks: list[tuple[float, float, float]] = []
        start, gamma = bounds[0], flags[0]
        for i in range(1, flags.size):
            if flags[i] != gamma:
                blocks.append((start, bounds[i], gamma))
                start, gamma = bounds[i], flags[i]
        blocks.append((start, bounds[-1], gamma))
        blocks = [(a, b, g) for a, b, g in blocks if b > a]

        total_width = sum(b - a for a, b, _ in blocks)
        vs, ws, gs = [], [], []
        for a, b, g in blocks:
            n_b = max(16, int(round(n * (b - a) / total_width)))
            v, w = _gl_segment_atoms(vot_lp, a, b, n_b)
            vs.append(v)
            ws.append(w)
            gs.append(np.full(v.size, g))
        return OpponentNodes(np.concatenate(vs), np.concatenate(ws), np.concatenate(gs))

    raise TypeError(f"unknown regime {type(regime).__name__}")


def _split_moments(
    spec: MechanismSpec,
    z_cmp: np.ndarray,
    nodes: OpponentNodes,
    w_eff: np.ndarray,
    time_lp: LogNormalParams,
    k: int,
):
    """Opponent-side game moments per subject node.

    For each subject bid value z_cmp[i], integrates over (V_B, T_B) with the
    T_B axis split exactly at the win boundary T_B = z_cmp / bid_vot. Returns
    (win_mass, pay, recv): the subject's win probability, its expected
    payment while winning, and its expected receipt while losing, all under
    the w_eff opponent weights.
    """
    z_lo, z_hi = ndtri(TRUNCATION_Q), ndtri(1.0 - TRUNCATION_Q)
    cut = (np.log(z_cmp)[:, None] - np.log(nodes.bid_vot)[None, :] - time_lp.mu) / time_lp.sigma
    cut = np.clip(cut, z_lo, z_hi)
    win_cdf = ndtr(cut) - ndtr(z_lo)
    win_mass = win_cdf @ w_eff

    gl_x, gl_w = _leggauss(int(k))

    def piece(lo, hi, fn):
        half = 0.5 * (hi - lo)
        z = half[..., None] * gl_x + (0.5 * (hi + lo))[..., None]
        w = half[..., None] * gl_w * _norm_pdf(z)
        y = nodes.bid_vot[None, :, None] * np.exp(time_lp.mu + time_lp.sigma * z)
        return (fn(y) * w).sum(axis=-1) @ w_eff

    lo_full = np.full_like(cut, z_lo)
    hi_full = np.full_like(cut, z_hi)
    kind = spec.kind
    if kind is MechanismKind.FIRST_PRICE:
        pay = z_cmp * win_mass
        recv = np.zeros_like(win_mass)
    elif kind in (MechanismKind.SECOND_PRICE, MechanismKind.CREDIT_SECOND_PRICE):
        pay = piece(lo_full, cut, lambda y: y)
        recv = np.zeros_like(win_mass)
    elif kind is MechanismKind.DIRECT_TRANSACTION:
        if spec.chi == 0:
            pay = 0.5 * z_cmp * win_mass
            recv = 0.5 * piece(cut, hi_full, lambda y: y)
        else:
            zc = z_cmp[:, None, None]
            pay = piece(lo_full, cut, lambda y: zc * y / (zc + y))
            recv = piece(cut, hi_full, lambda y: zc * y / (zc + y))
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown mechanism kind {kind}")
    return win_mass, pay, recv


def _inner_nodes(n: int) -> int:
    return max(24, int(n) // 4)


def _time_mass() -> float:
    z_lo, z_hi = ndtri(TRUNCATION_Q), ndtri(1.0 - TRUNCATION_Q)
    return float(ndtr(z_hi) - ndtr(z_lo))


def _quad_benefit(query: ExpectedBenefitQuery, n: int) -> float:
    v_a = query.fixed_vot_a
    spec = query.mechanism
    pop = query.population
    regime = query.regime
    t_a, u_a = lognormal_atoms(pop.time_saving, n)
    z_true = v_a * t_a

    nodes = _opponent_nodes(pop, regime, n)
    if isinstance(regime, Dishonest):
        rep_a = regime.subject_report
        if rep_a is None:
            rep_a = regime.reports.lookup(v_a)
        z_cmp = rep_a * t_a
    else:
        z_cmp = z_true

    subject_gamma = regime.subject_gamma if isinstance(regime, Abandonment) else 1
    if subject_gamma == 0:
        coin = spec.p_priority_a * z_true * (float(nodes.w.sum()) * _time_mass())
        return float(u_a @ coin)

    w_game = nodes.w * nodes.gamma
    win_mass, pay, recv = _split_moments(spec, z_cmp, nodes, w_game, pop.time_saving, _inner_nodes(n))
    per_subject = z_true * win_mass - pay + recv
    out_mass = float((nodes.w * (1.0 - nodes.gamma)).sum()) * _time_mass()
    if out_mass != 0.0:
        per_subject = per_subject + spec.p_priority_a * z_true * out_mass
    return float(u_a @ per_subject)


def expected_benefit_quadrature(query: ExpectedBenefitQuery, grid: int = 128) -> float:
    """Deterministic quadrature estimate of the expected game benefit."""
    if grid < 64:
        raise ValueError(f"grid must be >= 64 nodes per dimension, got {grid}")
    return _quad_benefit(query, int(grid))


def win_probability(v_a: float, population: PopulationModel, grid: int = 128) -> float:
    """P(v_A * T_A >= V_B * T_B) by the same quadrature rule."""
    if not v_a > 0.0:
        raise ValueError(f"v_a must be > 0, got {v_a}")
    z_lo, z_hi = ndtri(TRUNCATION_Q), ndtri(1.0 - TRUNCATION_Q)
    t_a, u_a = lognormal_atoms(population.time_saving, grid)
    nodes = _opponent_nodes(population, Honest(), grid)
    time_lp = population.time_saving
    cut = (np.log(v_a * t_a)[:, None] - np.log(nodes.bid_vot)[None, :] - time_lp.mu) / time_lp.sigma
    cut = np.clip(cut, z_lo, z_hi)
    return float(u_a @ ((ndtr(cut) - ndtr(z_lo)) @ nodes.w))


# ---------------------------------------------------------------------------
# Monte Carlo route


def _mc_block_benefits(query: ExpectedBenefitQuery, k: int, gen: np.random.Generator) -> np.ndarray:
    pop = query.population
    spec = query.mechanism
    v_a = query.fixed_vot_a
    t_a = gen.lognormal(pop.time_saving.mu, pop.time_saving.sigma, k)
    v_b = gen.lognormal(pop.vot.mu, pop.vot.sigma, k)
    t_b = gen.lognormal(pop.time_saving.mu, pop.time_saving.sigma, k)

    regime = query.regime
    if isinstance(regime, Honest):
        benefit, _, _ = settle_honest_arrays(v_a, t_a, v_b, t_b, spec)
        return benefit
    if isinstance(regime, Dishonest):
        rep_a = regime.subject_report
        if rep_a is None:
            rep_a = regime.reports.lookup(v_a)
        rep_b = regime.reports.lookup(v_b)
        benefit, _, _ = settle_dishonest_arrays(v_a, rep_a, t_a, v_b, rep_b, t_b, spec)
        return benefit
    if isinstance(regime, Abandonment):
        gam = regime.subject_gamma * regime.participation.lookup(v_b)
        honest_benefit, _, _ = settle_honest_arrays(v_a, t_a, v_b, t_b, spec)
        return gam * honest_benefit + (1.0 - gam) * spec.p_priority_a * v_a * t_a
    raise TypeError(f"unknown regime {type(regime).__name__}")


def expected_benefit_mc(
    query: ExpectedBenefitQuery, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo (estimate, standard error) of the expected game benefit.

    Draws happen in fixed-size blocks, each on its own child stream, so the
    result is bit-identical however the blocks would be distributed across
    workers.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    n = int(n_samples)
    n_blocks = (n + _MC_BLOCK - 1) // _MC_BLOCK
    children = rng.spawn(n_blocks)
    total = 0.0
    total_sq = 0.0
    done = 0
    for child in children:
        k = min(_MC_BLOCK, n - done)
        b = _mc_block_benefits(query, k, child)
        total += float(b.sum())
        total_sq += float((b * b).sum())
        done += k
    mean = total / n
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------------------
# Basic benefit, credit accounting, extra benefit


def expected_basic_benefit(v_a: float, population: PopulationModel, p_a: float) -> float:
    """Expected benefit under traditional equal-opportunity control: p_A * v_A * E[T_A]."""
    if not v_a > 0.0:
        raise ValueError(f"v_a must be > 0, got {v_a}")
    if not 0.0 <= p_a <= 1.0:
        raise ValueError(f"p_a must be in [0, 1], got {p_a}")
    return p_a * v_a * population.time_saving.mean


def pairwise_mean_min(values: np.ndarray, weights: np.ndarray) -> float:
    """E[min(X, X')] for two independent copies of a weighted atom set.

    O(m log m) via sorting and prefix sums; exact for the atom measure.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    x = values[order]
    w = weights[order]
    cw = np.cumsum(w)
    cwx = np.cumsum(w * x)
    total_w = cw[-1] if cw.size else 0.0
    # sum_t w_t * min(x_s, x_t) = sum_{t<=s} w_t x_t + x_s * (W - sum_{t<=s} w_t)
    inner = cwx + x * (total_w - cw)
    return float(np.dot(w, inner))


def _product_atoms(population: PopulationModel, n: int):
    """Flattened (V, T) tensor atoms: per-atom VOT, time, weight."""
    v_nodes, v_w = lognormal_atoms(population.vot, n)
    t_nodes, t_w = lognormal_atoms(population.time_saving, n)
    vot = np.repeat(v_nodes, t_nodes.size)
    t = np.tile(t_nodes, v_nodes.size)
    w = np.outer(v_w, t_w).ravel()
    return vot, t, w


def _participation_fraction(regime: Abandonment, population: PopulationModel, n: int) -> float:
    v_nodes, v_w = lognormal_atoms(population.vot, n)
    flags = regime.participation.lookup(v_nodes)
    return float((v_w @ flags) / v_w.sum())


def compute_credit_accounts(
    mechanism: MechanismSpec,
    population: PopulationModel,
    regime: Regime,
    *,
    grid: int | None = None,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> CreditAccounts:
    """Credit scheme bookkeeping for the given regime.

    per_capita_credit is the revenue-neutral credit each recipient gets: the
    population-mean operator revenue of the embedded second-price auction,
    divided by the recipient fraction (everyone, or joiners only). Exactly
    one of grid (quadrature) or n_samples (Monte Carlo) selects the route.
    """
    if mechanism.kind is not MechanismKind.CREDIT_SECOND_PRICE:
        raise ValueError(f"credit accounts require a credit mechanism, got {mechanism.kind}")
    if (grid is None) == (n_samples is None):
        raise ValueError("pass exactly one of grid= or n_samples=")

    if grid is not None:
        mean_revenue, joiner_fraction = _credit_revenue_quadrature(population, regime, int(grid))
    else:
        if rng is None:
            raise ValueError("n_samples route requires rng")
        mean_revenue, joiner_fraction = _credit_revenue_mc(population, regime, int(n_samples), rng)

    if mechanism.credit_policy is CreditPolicy.JOINERS_ONLY:
        credit = mean_revenue / joiner_fraction if joiner_fraction > 0.0 else 0.0
    else:
        credit = mean_revenue
    return CreditAccounts(
        per_capita_credit=credit,
        expected_trading_loss=mechanism.credit_loss_rate * credit,
    )


def _credit_revenue_quadrature(population: PopulationModel, regime: Regime, n: int):
    vot, t, w = _product_atoms(population, n)
    if isinstance(regime, Honest):
        return pairwise_mean_min(vot * t, w), 1.0
    if isinstance(regime, Dishonest):
        reported = regime.reports.lookup(vot) * t
        return pairwise_mean_min(reported, w), 1.0
    if isinstance(regime, Abandonment):
        flags = regime.participation.lookup(vot)
        revenue = pairwise_mean_min(vot * t, w * flags)
        return revenue, _participation_fraction(regime, population, n)
    raise TypeError(f"unknown regime {type(regime).__name__}")


def _credit_revenue_mc(population: PopulationModel, regime: Regime, n: int, rng: np.random.Generator):
    if n < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n}")
    n_blocks = (n + _MC_BLOCK - 1) // _MC_BLOCK
    children = rng.spawn(n_blocks)
    total = 0.0
    joiners = 0.0
    done = 0
    for child in children:
        k = min(_MC_BLOCK, n - done)
        v_a = child.lognormal(population.vot.mu, population.vot.sigma, k)
        t_a = child.lognormal(population.time_saving.mu, population.time_saving.sigma, k)
        v_b = child.lognormal(population.vot.mu, population.vot.sigma, k)
        t_b = child.lognormal(population.time_saving.mu, population.time_saving.sigma, k)
        if isinstance(regime, Dishonest):
            x = regime.reports.lookup(v_a) * t_a
            y = regime.reports.lookup(v_b) * t_b
            revenue = np.minimum(x, y)
            joiners += k
        elif isinstance(regime, Abandonment):
            flags_a = regime.participation.lookup(v_a)
            gam = flags_a * regime.participation.lookup(v_b)
            revenue = gam * np.minimum(v_a * t_a, v_b * t_b)
            joiners += float(flags_a.sum())
        elif isinstance(regime, Honest):
            revenue = np.minimum(v_a * t_a, v_b * t_b)
            joiners += k
        else:
            raise TypeError(f"unknown regime {type(regime).__name__}")
        total += float(revenue.sum())
        done += k
    return total / n, joiners / n


def subject_credit(accounts: CreditAccounts, mechanism: MechanismSpec, regime: Regime) -> float:
    """Net credit income C - L the subject keeps under this regime."""
    if mechanism.kind is not MechanismKind.CREDIT_SECOND_PRICE:
        return 0.0
    if (
        mechanism.credit_policy is CreditPolicy.JOINERS_ONLY
        and isinstance(regime, Abandonment)
        and regime.subject_gamma == 0
    ):
        return 0.0
    return accounts.per_capita_credit - accounts.expected_trading_loss


def expected_extra_benefit(
    query: ExpectedBenefitQuery,
    *,
    route: str = "quadrature",
    grid: int = 128,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
    p_a: float | None = None,
    credit_accounts: CreditAccounts | None = None,
) -> float:
    """Expected benefit (game plus any credit income) minus the basic benefit.

    The basic benefit uses the closed-form E[T_A]; the game part follows the
    selected route. Pass credit_accounts to reuse a precomputed C across many
    VOT levels (it does not depend on the subject).
    """
    if p_a is None:
        p_a = query.mechanism.p_priority_a
    if route == "quadrature":
        est = expected_benefit_quadrature(query, grid)
    elif route == "mc":
        if n_samples is None or rng is None:
            raise ValueError("mc route requires n_samples and rng")
        est, _ = expected_benefit_mc(query, n_samples, rng)
    else:
        raise ValueError(f"route must be 'quadrature' or 'mc', got {route!r}")

    if query.mechanism.kind is MechanismKind.CREDIT_SECOND_PRICE:
        if credit_accounts is None:
            if route == "quadrature":
                credit_accounts = compute_credit_accounts(
                    query.mechanism, query.population, query.regime, grid=grid
                )
            else:
                credit_accounts = compute_credit_accounts(
                    query.mechanism, query.population, query.regime, n_samples=n_samples, rng=rng
                )
        est += subject_credit(credit_accounts, query.mechanism, query.regime)

    return est - expected_basic_benefit(query.fixed_vot_a, query.population, p_a)

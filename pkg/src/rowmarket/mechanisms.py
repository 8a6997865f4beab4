"""Per-game settlement rules for the four right-of-way instruments.

A game is a pairwise conflict between vehicle A and vehicle B. Each vehicle
values the time it would save (its v*t product, in cents); the instrument in
force decides who passes first and how money moves between the two vehicles
and the operator. Settlement covers the game itself; credit distribution and
trading losses are population-level accounting handled in `expectation`.

Scalar functions here are the reference implementation of the settlement
rules; `settle_honest_arrays` / `settle_dishonest_arrays` are vectorized
counterparts used by the Monte Carlo machinery and are cross-checked against
the scalar versions in the test suite.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MechanismKind",
    "CreditPolicy",
    "MechanismSpec",
    "VehicleState",
    "GameInstance",
    "Settlement",
    "alpha_second_price",
    "alpha_transaction",
    "settle_honest",
    "settle_abandonment",
    "settle_dishonest",
    "settle_honest_arrays",
    "settle_dishonest_arrays",
]


class MechanismKind(enum.Enum):
    FIRST_PRICE = "first_price"
    SECOND_PRICE = "second_price"
    CREDIT_SECOND_PRICE = "credit_second_price"
    DIRECT_TRANSACTION = "direct_transaction"


class CreditPolicy(enum.Enum):
    ALL_TRAVELERS = "all_travelers"
    JOINERS_ONLY = "joiners_only"


@dataclass(frozen=True)
class MechanismSpec:
    """Instrument in force plus its parameters.

    chi selects the direct-transaction split rule: 0 keeps the even split,
    1 splits the winner's surplus in proportion to the two vehicles' values.
    credit_loss_rate is the fraction of distributed credit lost to trading
    friction. p_priority_a is the probability A receives priority when a
    game does not take place (p_B = 1 - p_A).
    """

    kind: MechanismKind
    chi: int = 0
    credit_policy: CreditPolicy = CreditPolicy.ALL_TRAVELERS
    credit_loss_rate: float = 0.10
    p_priority_a: float = 0.5

    def __post_init__(self) -> None:
        if self.chi not in (0, 1):
            raise ValueError(f"chi must be 0 or 1, got {self.chi}")
        if not 0.0 <= self.p_priority_a <= 1.0:
            raise ValueError(f"p_priority_a must be in [0, 1], got {self.p_priority_a}")
        if not 0.0 <= self.credit_loss_rate < 1.0:
            raise ValueError(f"credit_loss_rate must be in [0, 1), got {self.credit_loss_rate}")


@dataclass(frozen=True)
class VehicleState:
    """One vehicle's true VOT, reported VOT, realized time saving, and participation flag."""

    true_vot: float
    time_saving: float
    reported_vot: float | None = None
    participates: bool = True

    def __post_init__(self) -> None:
        if self.reported_vot is None:
            object.__setattr__(self, "reported_vot", self.true_vot)
        if not (self.true_vot > 0.0 and self.reported_vot > 0.0 and self.time_saving > 0.0):
            raise ValueError(
                "true_vot, reported_vot and time_saving must all be > 0, got "
                f"({self.true_vot}, {self.reported_vot}, {self.time_saving})"
            )

    @property
    def value(self) -> float:
        """True surplus v*t in cents."""
        return self.true_vot * self.time_saving

    @property
    def reported_value(self) -> float:
        """Reported surplus (the sealed bid) in cents."""
        return self.reported_vot * self.time_saving


@dataclass(frozen=True)
class GameInstance:
    """One pairwise conflict."""

    vehicle_a: VehicleState
    vehicle_b: VehicleState

    @classmethod
    def honest(cls, v_a: float, t_a: float, v_b: float, t_b: float) -> "GameInstance":
        return cls(VehicleState(v_a, t_a), VehicleState(v_b, t_b))


@dataclass(frozen=True)
class Settlement:
    """Monetary-equivalent outcome of one game, in cents."""

    benefit_a: float
    benefit_b: float
    operator_revenue: float
    a_won: bool


def alpha_second_price(winner_value: float, loser_value: float) -> float:
    """Winner's return rate under a second-price auction.

    Values are v*t products; the winner keeps (winner - loser)/winner of its
    surplus, i.e. it pays the loser's bid to the operator.
    """
    if winner_value <= 0.0:
        raise ValueError(f"winner_value must be > 0, got {winner_value}")
    if loser_value < 0.0:
        raise ValueError(f"loser_value must be >= 0, got {loser_value}")
    if winner_value < loser_value:
        raise ValueError(
            f"winner_value {winner_value} < loser_value {loser_value}: caller mislabeled the winner"
        )
    return (winner_value - loser_value) / winner_value


def alpha_transaction(chi: int, value_a: float, value_b: float) -> float:
    """Vehicle A's share of the winner's surplus in a direct transaction.

    chi = 0 gives the even split, chi = 1 the value-proportional split
    value_a / (value_a + value_b).
    """
    if chi not in (0, 1):
        raise ValueError(f"chi must be 0 or 1, got {chi}")
    if value_a <= 0.0 or value_b <= 0.0:
        raise ValueError(f"values must be > 0, got ({value_a}, {value_b})")
    return ((value_a - 1.0) * chi + 1.0) / ((value_a + value_b - 2.0) * chi + 2.0)


def _require_honest(game: GameInstance) -> None:
    for side, veh in (("A", game.vehicle_a), ("B", game.vehicle_b)):
        if veh.reported_vot != veh.true_vot:
            raise ValueError(f"vehicle {side} reports {veh.reported_vot} != true VOT {veh.true_vot}")


def _require_participating(game: GameInstance) -> None:
    if not (game.vehicle_a.participates and game.vehicle_b.participates):
        raise ValueError("both vehicles must participate")


def settle_honest(game: GameInstance, spec: MechanismSpec) -> Settlement:
    """Settle one game with truthful bids; ties in v*t go to A."""
    _require_honest(game)
    _require_participating(game)
    a, b = game.vehicle_a, game.vehicle_b
    a_won = a.value >= b.value
    winner, loser = (a, b) if a_won else (b, a)
    w_val, l_val = winner.value, loser.value

    if spec.kind is MechanismKind.FIRST_PRICE:
        # Winner surrenders its whole bid to the operator.
        win_b, lose_b, op = 0.0, 0.0, w_val
    elif spec.kind in (MechanismKind.SECOND_PRICE, MechanismKind.CREDIT_SECOND_PRICE):
        # winner keeps alpha * w_val = w_val - l_val; operator gets the loser's bid
        win_b, lose_b, op = w_val - l_val, 0.0, l_val
    elif spec.kind is MechanismKind.DIRECT_TRANSACTION:
        # loser's share computed from its own side of the split (avoids the
        # cancellation in (1 - alpha) when the game is very lopsided)
        payment = alpha_transaction(spec.chi, l_val, w_val) * w_val
        win_b, lose_b, op = w_val - payment, payment, 0.0
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown mechanism kind {spec.kind}")

    if a_won:
        return Settlement(win_b, lose_b, op, True)
    return Settlement(lose_b, win_b, op, False)


def settle_abandonment(game: GameInstance, spec: MechanismSpec, gamma: int) -> Settlement:
    """Settle with an opt-out: gamma = 0 means at least one vehicle declined.

    When gamma = 0 the returned benefits are the coin-flip means
    (p_A * v_A * t_A, p_B * v_B * t_B) rather than one sampled outcome.
    gamma = 1 requires both vehicles to participate and reduces to
    settle_honest.
    """
    if gamma not in (0, 1):
        raise ValueError(f"gamma must be 0 or 1, got {gamma}")
    _require_honest(game)
    if gamma == 1:
        return settle_honest(game, spec)
    a, b = game.vehicle_a, game.vehicle_b
    p_a = spec.p_priority_a
    return Settlement(p_a * a.value, (1.0 - p_a) * b.value, 0.0, a.value >= b.value)


def settle_dishonest(game: GameInstance, spec: MechanismSpec) -> Settlement:
    """Settle with possibly false reported VOTs and no opt-out.

    The winner and all payments follow the reported values; the winner's
    saved time is still valued at its true VOT. Under a direct transaction
    the loser's compensation is its value-proportional (or even, chi = 0)
    share of the winner's reported surplus.
    """
    _require_participating(game)
    a, b = game.vehicle_a, game.vehicle_b
    a_won = a.reported_value >= b.reported_value
    winner, loser = (a, b) if a_won else (b, a)
    r_w, r_l = winner.reported_value, loser.reported_value
    true_w = winner.value

    if spec.kind is MechanismKind.FIRST_PRICE:
        # Winner pays its own reported bid: nets (v - v_reported) * t.
        win_b, lose_b, op = true_w - r_w, 0.0, r_w
    elif spec.kind in (MechanismKind.SECOND_PRICE, MechanismKind.CREDIT_SECOND_PRICE):
        # beta~ * reported winner surplus is exactly the loser's reported bid
        win_b, lose_b, op = true_w - r_l, 0.0, r_l
    elif spec.kind is MechanismKind.DIRECT_TRANSACTION:
        payment = alpha_transaction(spec.chi, r_l, r_w) * r_w
        win_b, lose_b, op = true_w - payment, payment, 0.0
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown mechanism kind {spec.kind}")

    if a_won:
        return Settlement(win_b, lose_b, op, True)
    return Settlement(lose_b, win_b, op, False)


def settle_honest_arrays(v_a, t_a, v_b, t_b, spec: MechanismSpec):
    """Vectorized settle_honest over aligned arrays.

    Returns (benefit_a, benefit_b, operator_revenue) arrays.
    """
    x = np.asarray(v_a, dtype=float) * np.asarray(t_a, dtype=float)
    y = np.asarray(v_b, dtype=float) * np.asarray(t_b, dtype=float)
    a_wins = x >= y
    w_val = np.where(a_wins, x, y)
    l_val = np.where(a_wins, y, x)

    if spec.kind is MechanismKind.FIRST_PRICE:
        win_b = np.zeros_like(w_val)
        lose_b = np.zeros_like(w_val)
        op = w_val
    elif spec.kind in (MechanismKind.SECOND_PRICE, MechanismKind.CREDIT_SECOND_PRICE):
        win_b = w_val - l_val
        lose_b = np.zeros_like(w_val)
        op = l_val
    elif spec.kind is MechanismKind.DIRECT_TRANSACTION:
        if spec.chi == 0:
            share = 0.5 * w_val
        else:
            share = w_val * l_val / (w_val + l_val)
        win_b = w_val - share
        lose_b = share
        op = np.zeros_like(w_val)
    else:  # pragma: no cover
        raise ValueError(f"unknown mechanism kind {spec.kind}")

    benefit_a = np.where(a_wins, win_b, lose_b)
    benefit_b = np.where(a_wins, lose_b, win_b)
    return benefit_a, benefit_b, op


def settle_dishonest_arrays(v_a, rep_a, t_a, v_b, rep_b, t_b, spec: MechanismSpec):
    """Vectorized settle_dishonest over aligned arrays."""
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    x_true = np.asarray(v_a, dtype=float) * t_a
    y_true = np.asarray(v_b, dtype=float) * t_b
    x_rep = np.asarray(rep_a, dtype=float) * t_a
    y_rep = np.asarray(rep_b, dtype=float) * t_b
    a_wins = x_rep >= y_rep
    r_w = np.where(a_wins, x_rep, y_rep)
    r_l = np.where(a_wins, y_rep, x_rep)
    true_w = np.where(a_wins, x_true, y_true)

    if spec.kind is MechanismKind.FIRST_PRICE:
        payment = r_w
        lose_b = np.zeros_like(r_w)
        op = r_w
    elif spec.kind in (MechanismKind.SECOND_PRICE, MechanismKind.CREDIT_SECOND_PRICE):
        payment = r_l
        lose_b = np.zeros_like(r_w)
        op = r_l
    elif spec.kind is MechanismKind.DIRECT_TRANSACTION:
        payment = 0.5 * r_w if spec.chi == 0 else r_w * r_l / (r_w + r_l)
        lose_b = payment
        op = np.zeros_like(r_w)
    else:  # pragma: no cover
        raise ValueError(f"unknown mechanism kind {spec.kind}")

    win_b = true_w - payment
    benefit_a = np.where(a_wins, win_b, lose_b)
    benefit_b = np.where(a_wins, lose_b, win_b)
    return benefit_a, benefit_b, op

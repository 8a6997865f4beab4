import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from rowmarket.mechanisms import (
    CreditPolicy,
    GameInstance,
    MechanismKind,
    MechanismSpec,
    VehicleState,
    alpha_second_price,
    alpha_transaction,
    settle_abandonment,
    settle_dishonest,
    settle_dishonest_arrays,
    settle_honest,
    settle_honest_arrays,
)

ALL_SPECS = [
    MechanismSpec(MechanismKind.FIRST_PRICE),
    MechanismSpec(MechanismKind.SECOND_PRICE),
    MechanismSpec(MechanismKind.CREDIT_SECOND_PRICE),
    MechanismSpec(MechanismKind.CREDIT_SECOND_PRICE, credit_policy=CreditPolicy.JOINERS_ONLY),
    MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=0),
    MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=1),
]

positive = st.floats(1e-3, 1e3)


class TestAlphas:
    def test_second_price_paper_example(self):
        assert alpha_second_price(4.0, 1.0) == 0.75

    def test_second_price_tie_pays_everything(self):
        assert alpha_second_price(3.7, 3.7) == 0.0

    def test_second_price_direct_evaluation(self):
        assert alpha_second_price(5.0, 2.0) == pytest.approx(0.6, rel=1e-15)

    def test_second_price_rejects_mislabeled_winner(self):
        with pytest.raises(ValueError):
            alpha_second_price(1.0, 4.0)
        with pytest.raises(ValueError):
            alpha_second_price(0.0, 0.0)
        with pytest.raises(ValueError):
            alpha_second_price(1.0, -0.5)

    def test_transaction_chi0_always_half(self):
        assert alpha_transaction(0, 4.0, 1.0) == 0.5
        assert alpha_transaction(0, 0.01, 900.0) == 0.5

    def test_transaction_chi1_symmetric_split(self):
        assert alpha_transaction(1, 2.5, 2.5) == 0.5

    def test_transaction_chi1_proportional(self):
        assert alpha_transaction(1, 4.0, 1.0) == pytest.approx(0.8, rel=1e-15)

    def test_transaction_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            alpha_transaction(2, 1.0, 1.0)
        with pytest.raises(ValueError):
            alpha_transaction(1, -1.0, 1.0)
        with pytest.raises(ValueError):
            alpha_transaction(0, 1.0, 0.0)


class TestSettleHonest:
    def test_second_price_worked_example(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        out = settle_honest(game, MechanismSpec(MechanismKind.SECOND_PRICE))
        assert out.benefit_a == 3.0
        assert out.benefit_b == 0.0
        assert out.operator_revenue == 1.0
        assert out.a_won

    def test_first_price_winner_surrenders_everything(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        out = settle_honest(game, MechanismSpec(MechanismKind.FIRST_PRICE))
        assert (out.benefit_a, out.benefit_b, out.operator_revenue) == (0.0, 0.0, 4.0)

    def test_transaction_chi0_even_split(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        out = settle_honest(game, MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=0))
        assert (out.benefit_a, out.benefit_b, out.operator_revenue) == (2.0, 2.0, 0.0)

    def test_tie_goes_to_vehicle_a(self):
        game = GameInstance.honest(1.0, 2.0, 2.0, 1.0)
        out = settle_honest(game, MechanismSpec(MechanismKind.SECOND_PRICE))
        assert out.a_won

    def test_rejects_dishonest_reports(self):
        game = GameInstance(VehicleState(2.0, 2.0, reported_vot=1.5), VehicleState(0.5, 2.0))
        with pytest.raises(ValueError):
            settle_honest(game, MechanismSpec(MechanismKind.SECOND_PRICE))

    def test_rejects_nonparticipants(self):
        game = GameInstance(VehicleState(2.0, 2.0, participates=False), VehicleState(0.5, 2.0))
        with pytest.raises(ValueError):
            settle_honest(game, MechanismSpec(MechanismKind.SECOND_PRICE))

    def test_rejects_nonpositive_inputs(self):
        with pytest.raises(ValueError):
            VehicleState(-2.0, 2.0)
        with pytest.raises(ValueError):
            VehicleState(2.0, 0.0)


class TestSettleAbandonment:
    def test_declined_game_returns_coin_means(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        out = settle_abandonment(game, MechanismSpec(MechanismKind.FIRST_PRICE), gamma=0)
        assert (out.benefit_a, out.benefit_b, out.operator_revenue) == (2.0, 0.5, 0.0)

    def test_priority_always_to_a(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        spec = MechanismSpec(MechanismKind.SECOND_PRICE, p_priority_a=1.0)
        out = settle_abandonment(game, spec, gamma=0)
        assert (out.benefit_a, out.benefit_b, out.operator_revenue) == (4.0, 0.0, 0.0)

    @given(v_a=positive, t_a=positive, v_b=positive, t_b=positive)
    @settings(max_examples=80)
    def test_gamma_one_reduces_to_honest(self, v_a, t_a, v_b, t_b):
        game = GameInstance.honest(v_a, t_a, v_b, t_b)
        for spec in ALL_SPECS:
            assert settle_abandonment(game, spec, gamma=1) == settle_honest(game, spec)

    def test_rejects_bad_gamma(self):
        game = GameInstance.honest(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            settle_abandonment(game, ALL_SPECS[0], gamma=2)


class TestSettleDishonest:
    def test_first_price_truthful_bid_nets_zero(self):
        game = GameInstance.honest(2.0, 2.0, 0.5, 2.0)
        out = settle_dishonest(game, MechanismSpec(MechanismKind.FIRST_PRICE))
        assert out.benefit_a == 0.0

    def test_first_price_underbid_keeps_difference(self):
        game = GameInstance(VehicleState(2.0, 2.0, reported_vot=1.0), VehicleState(0.4, 2.0))
        out = settle_dishonest(game, MechanismSpec(MechanismKind.FIRST_PRICE))
        assert out.a_won
        assert out.benefit_a == pytest.approx(2.0, rel=1e-15)
        assert out.operator_revenue == pytest.approx(2.0, rel=1e-15)

    def test_second_price_overbid_pays_losers_bid(self):
        # reported products: A = 3*2 = 6, B = 1; payment is B's reported bid
        game = GameInstance(VehicleState(2.0, 2.0, reported_vot=3.0), VehicleState(0.5, 2.0))
        out = settle_dishonest(game, MechanismSpec(MechanismKind.SECOND_PRICE))
        assert out.benefit_a == pytest.approx(3.0, rel=1e-15)
        assert out.operator_revenue == pytest.approx(1.0, rel=1e-15)

    @given(v_a=positive, t_a=positive, v_b=positive, t_b=positive)
    @settings(max_examples=80)
    def test_truthful_reports_reduce_to_honest(self, v_a, t_a, v_b, t_b):
        game = GameInstance.honest(v_a, t_a, v_b, t_b)
        for spec in ALL_SPECS:
            dis = settle_dishonest(game, spec)
            hon = settle_honest(game, spec)
            assert dis.benefit_a == pytest.approx(hon.benefit_a, rel=1e-12, abs=1e-12)
            assert dis.benefit_b == pytest.approx(hon.benefit_b, rel=1e-12, abs=1e-12)
            assert dis.operator_revenue == pytest.approx(hon.operator_revenue, rel=1e-12, abs=1e-12)

    @given(
        v_a=positive, r_a=positive, t_a=positive,
        v_b=positive, r_b=positive, t_b=positive,
        chi=st.sampled_from([0, 1]),
    )
    @settings(max_examples=120)
    def test_transaction_rows_as_printed_match_both_orderings(self, v_a, r_a, t_a, v_b, r_b, t_b, chi):
        """The two dishonest transaction table rows (winner pays beta~ share,
        loser receives alpha~ share) agree once alpha~ is read as the Eq.-3
        share with A as subject."""
        spec = MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=chi)
        game = GameInstance(
            VehicleState(v_a, t_a, reported_vot=r_a), VehicleState(v_b, t_b, reported_vot=r_b)
        )
        out = settle_dishonest(game, spec)
        alpha_a = alpha_transaction(chi, r_a * t_a, r_b * t_b)  # subject-A share
        if r_a * t_a >= r_b * t_b:
            # row: A wins; A gets (v_A - beta~ r_A) t_A, B gets beta~ r_A t_A
            expected_a = v_a * t_a - (1.0 - alpha_a) * r_a * t_a
            expected_b = (1.0 - alpha_a) * r_a * t_a
        else:
            # row: B wins; A gets alpha~ r_B t_B, B gets (v_B - alpha~ r_B) t_B
            expected_a = alpha_a * r_b * t_b
            expected_b = v_b * t_b - alpha_a * r_b * t_b
        # 1e-9: the printed (1 - alpha~) form cancels for very lopsided games
        assert out.benefit_a == pytest.approx(expected_a, rel=1e-9, abs=1e-9)
        assert out.benefit_b == pytest.approx(expected_b, rel=1e-9, abs=1e-9)
        assert out.operator_revenue == 0.0


class TestInvariants:
    @given(v_a=positive, t_a=positive, v_b=positive, t_b=positive)
    @settings(max_examples=150)
    def test_conservation_honest(self, v_a, t_a, v_b, t_b):
        game = GameInstance.honest(v_a, t_a, v_b, t_b)
        winner_surplus = max(v_a * t_a, v_b * t_b)
        for spec in ALL_SPECS:
            out = settle_honest(game, spec)
            total = out.benefit_a + out.benefit_b + out.operator_revenue
            assert total == pytest.approx(winner_surplus, rel=1e-9)

    @given(
        v_a=positive, r_a=positive, t_a=positive,
        v_b=positive, r_b=positive, t_b=positive,
    )
    @settings(max_examples=100)
    def test_conservation_dishonest_true_surplus(self, v_a, r_a, t_a, v_b, r_b, t_b):
        game = GameInstance(
            VehicleState(v_a, t_a, reported_vot=r_a), VehicleState(v_b, t_b, reported_vot=r_b)
        )
        winner_true = v_a * t_a if r_a * t_a >= r_b * t_b else v_b * t_b
        for spec in ALL_SPECS:
            out = settle_dishonest(game, spec)
            total = out.benefit_a + out.benefit_b + out.operator_revenue
            assert total == pytest.approx(winner_true, rel=1e-9, abs=1e-12)

    @given(v_a=positive, t_a=positive, v_b=positive, t_b=positive)
    @settings(max_examples=100)
    def test_transaction_operator_zero_and_split_nonnegative(self, v_a, t_a, v_b, t_b):
        game = GameInstance.honest(v_a, t_a, v_b, t_b)
        for chi in (0, 1):
            out = settle_honest(game, MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=chi))
            assert out.operator_revenue == 0.0
            assert out.benefit_a >= 0.0 and out.benefit_b >= 0.0
            assert out.benefit_a + out.benefit_b == pytest.approx(max(v_a * t_a, v_b * t_b), rel=1e-12)

    @given(v_a=positive, t_a=positive, v_b=positive, t_b=positive)
    @settings(max_examples=100)
    def test_second_price_winner_keeps_value_difference(self, v_a, t_a, v_b, t_b):
        game = GameInstance.honest(v_a, t_a, v_b, t_b)
        out = settle_honest(game, MechanismSpec(MechanismKind.SECOND_PRICE))
        diff = abs(v_a * t_a - v_b * t_b)
        winner = out.benefit_a if out.a_won else out.benefit_b
        loser = out.benefit_b if out.a_won else out.benefit_a
        assert winner == pytest.approx(diff, rel=1e-12, abs=1e-12)
        assert loser == 0.0

    @given(
        v_a=positive, t_a=positive, v_b=positive, t_b=positive,
        scale=st.floats(1e-3, 1e3),
    )
    @settings(max_examples=100)
    def test_winner_identity_invariant_under_common_scaling(self, v_a, t_a, v_b, t_b, scale):
        # exact ties are measure-zero and float scaling can break them
        assume(abs(v_a * t_a - v_b * t_b) > 1e-6 * max(v_a * t_a, v_b * t_b))
        base = GameInstance.honest(v_a, t_a, v_b, t_b)
        scaled = GameInstance.honest(v_a * scale, t_a, v_b * scale, t_b)
        for spec in ALL_SPECS:
            assert settle_honest(base, spec).a_won == settle_honest(scaled, spec).a_won
            assert settle_dishonest(base, spec).a_won == settle_dishonest(scaled, spec).a_won


class TestArrayTwins:
    def test_honest_arrays_match_scalar(self):
        rng = np.random.default_rng(5)
        v_a, t_a = rng.lognormal(0, 0.6, 500), rng.lognormal(0.5, 0.7, 500)
        v_b, t_b = rng.lognormal(0, 0.6, 500), rng.lognormal(0.5, 0.7, 500)
        for spec in ALL_SPECS:
            b_a, b_b, op = settle_honest_arrays(v_a, t_a, v_b, t_b, spec)
            for i in range(0, 500, 37):
                out = settle_honest(GameInstance.honest(v_a[i], t_a[i], v_b[i], t_b[i]), spec)
                assert b_a[i] == pytest.approx(out.benefit_a, rel=1e-12, abs=1e-15)
                assert b_b[i] == pytest.approx(out.benefit_b, rel=1e-12, abs=1e-15)
                assert op[i] == pytest.approx(out.operator_revenue, rel=1e-12, abs=1e-15)

    def test_dishonest_arrays_match_scalar(self):
        rng = np.random.default_rng(6)
        v_a, t_a = rng.lognormal(0, 0.6, 500), rng.lognormal(0.5, 0.7, 500)
        v_b, t_b = rng.lognormal(0, 0.6, 500), rng.lognormal(0.5, 0.7, 500)
        r_a, r_b = v_a * rng.uniform(0.4, 1.6, 500), v_b * rng.uniform(0.4, 1.6, 500)
        for spec in ALL_SPECS:
            b_a, b_b, op = settle_dishonest_arrays(v_a, r_a, t_a, v_b, r_b, t_b, spec)
            for i in range(0, 500, 41):
                game = GameInstance(
                    VehicleState(v_a[i], t_a[i], reported_vot=r_a[i]),
                    VehicleState(v_b[i], t_b[i], reported_vot=r_b[i]),
                )
                out = settle_dishonest(game, spec)
                assert b_a[i] == pytest.approx(out.benefit_a, rel=1e-12, abs=1e-15)
                assert b_b[i] == pytest.approx(out.benefit_b, rel=1e-12, abs=1e-15)
                assert op[i] == pytest.approx(out.operator_revenue, rel=1e-12, abs=1e-15)


class TestSpecValidation:
    def test_chi_must_be_binary(self):
        with pytest.raises(ValueError):
            MechanismSpec(MechanismKind.DIRECT_TRANSACTION, chi=2)

    def test_priority_probability_range(self):
        with pytest.raises(ValueError):
            MechanismSpec(MechanismKind.SECOND_PRICE, p_priority_a=1.5)

    def test_loss_rate_range(self):
        with pytest.raises(ValueError):
            MechanismSpec(MechanismKind.CREDIT_SECOND_PRICE, credit_loss_rate=1.0)

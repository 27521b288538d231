"""Settlement exactness, staking flows, and the incentive helpers."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sopgov.economics import (
    MICRO,
    EconomyLedger,
    NoBudget,
    NoLockedStake,
    NotCompleted,
    OutOfRange,
    PriceExceedsBudget,
    TreasuryFlow,
    apportion,
    basis_points,
    bid_score,
    ema_update,
    insurance_adequacy,
    min_bid_table,
    min_rational_bid,
    opportunity_cost,
    psi,
    psi_multiplier,
    treasury_flow,
)
from sopgov.ledger import EventType, Unauthorized


def units(n):
    return n * MICRO


@pytest.fixture
def economy():
    econ = EconomyLedger()
    econ.fund_treasury(units(100_000))
    econ.deposit_mission_budget("M1", "sponsor-1", units(50_000))
    return econ


def settle(econ, budget_units, rho, node="N1", alpha=None):
    if alpha is not None:
        econ.alpha = alpha
    econ.allocate_task_budget("M1", node, units(budget_units))
    econ.mark_node_completed(node, "A0001")
    return econ.settle_reward(node, reputation=rho)


# -- reputation multiplier -----------------------------------------------------


def test_psi_piecewise_values():
    assert psi(500, 500) == 1000
    assert psi(800, 500) == 1150
    assert psi(300, 500) == 900
    assert psi(1000, 1000) == 1500
    assert psi(0, 1000) == 500
    assert psi(750, 0) == 1000
    assert psi_multiplier(800) == pytest.approx(1.15)


def test_psi_domain():
    for rho, alpha in ((-1, 500), (1001, 500), (500, -1), (500, 1001)):
        with pytest.raises(OutOfRange):
            psi(rho, alpha)


# -- settlement -----------------------------------------------------------------


def test_settlement_micro_exact_premium(economy):
    result = settle(economy, 1_000, 800)
    assert result.payout == 1_115_500_000  # 1115.5 units
    assert result.debit == units(1_000)
    assert result.fee == units(20)
    assert result.reserve == units(10)
    assert result.residue == 0
    assert not result.underflow


def test_settlement_micro_exact_top_reputation(economy):
    result = settle(economy, 1_000, 1_000)
    assert result.psi_millis == 1250
    assert result.payout == 1_212_500_000  # 1212.5 units
    assert result.debit == units(1_000)


def test_settlement_discount_returns_to_escrow(economy):
    before = economy.escrow_remaining("M1")
    result = settle(economy, 1_000, 300)
    assert result.psi_millis == 900
    assert result.payout == units(873)
    assert result.debit == units(903)
    assert economy.escrow_remaining("M1") == before - result.debit
    assert economy.conservation_check()


def test_settlement_underflow_caps_subsidy():
    econ = EconomyLedger()  # empty treasury
    econ.deposit_mission_budget("M1", "s", units(2_000))
    econ.allocate_task_budget("M1", "N1", units(1_000))
    econ.mark_node_completed("N1", "A1")
    result = econ.settle_reward("N1", reputation=1_000)
    assert result.underflow
    assert result.subsidy == units(20)  # capped at this settlement's own fee
    assert result.payout == units(990)
    assert econ.treasury == 0
    types = [e.event_type for e in econ.log.events]
    assert EventType.TREASURY_UNDERFLOW in types


def test_settlement_event_ordering(economy):
    settle(economy, 500, 700)
    tail = [e.event_type for e in economy.log.events[-2:]]
    assert tail == [EventType.REWARD_SETTLED, EventType.TRANSFER]


def test_settlement_guards(economy):
    with pytest.raises(NoBudget):
        economy.settle_reward("N404", reputation=500)
    economy.allocate_task_budget("M1", "N1", units(100))
    with pytest.raises(NotCompleted):
        economy.settle_reward("N1", reputation=500)
    economy.mark_node_completed("N1", "A1")
    economy.settle_reward("N1", reputation=500)
    with pytest.raises(NoBudget):
        economy.settle_reward("N1", reputation=500)  # double settle


def test_allocation_guards(economy):
    with pytest.raises(NoBudget):
        economy.allocate_task_budget("M404", "N1", units(10))
    with pytest.raises(NoBudget):
        economy.allocate_task_budget("M1", "N1", units(50_001))
    economy.allocate_task_budget("M1", "N1", units(10))
    with pytest.raises(NoBudget):
        economy.allocate_task_budget("M1", "N1", units(10))


def test_solvency_grid_exhaustive():
    """Escrow debit never exceeds the task budget, treasury never goes negative."""
    for alpha in (0, 250, 500, 1000):
        for prefund in (0, units(10_000_000)):
            econ = EconomyLedger(alpha=alpha)
            econ.fund_treasury(prefund)
            econ.deposit_mission_budget("M1", "s", units(50_000_000))
            n = 0
            for rho in range(0, 1001, 50):
                for budget in (100, 1_000, 12_345):
                    node = f"N{n}"
                    n += 1
                    econ.allocate_task_budget("M1", node, units(budget))
                    econ.mark_node_completed(node, "A1")
                    result = econ.settle_reward(node, reputation=rho)
                    assert result.debit <= units(budget)
                    assert result.payout >= 0
                    assert econ.treasury >= 0
                    if psi(rho, alpha) >= 1000:
                        assert result.debit == units(budget)
            assert econ.conservation_check()
            assert econ.insurance >= 0


def test_refund_escrow(economy):
    settle(economy, 1_000, 200)
    leftover = economy.escrow_remaining("M1")
    assert economy.refund_escrow("M1") == leftover
    assert economy.escrow_remaining("M1") == 0
    assert economy.log.events[-1].event_type is EventType.TRANSFER


# -- staking ----------------------------------------------------------------------


def test_stake_lock_refund_cycle(economy):
    economy.lock_stake("A1", "N1", units(150))
    assert economy.locked_stake("A1", "N1") == units(150)
    assert economy.refund_stake("A1", "N1") == units(150)
    with pytest.raises(NoLockedStake):
        economy.refund_stake("A1", "N1")
    tail = [e.event_type for e in economy.log.events[-2:]]
    assert tail == [EventType.STAKE_REFUNDED, EventType.TRANSFER]


def test_slash_splits_and_caps(economy):
    economy.lock_stake("A1", "N1", units(200))
    treasury0, insurance0 = economy.treasury, economy.insurance
    actual = economy.slash_stake("A1", "N1", units(500), "timeout", "execution")
    assert actual == units(200)
    assert economy.treasury - treasury0 == units(100)
    assert economy.insurance - insurance0 == units(100)
    with pytest.raises(NoLockedStake):
        economy.slash_stake("A1", "N1", units(1), "again", "execution")


def test_slash_odd_micro_goes_to_treasury(economy):
    economy.lock_stake("A1", "N1", 3)
    treasury0, insurance0 = economy.treasury, economy.insurance
    economy.slash_stake("A1", "N1", 3, "x", "guardian")
    assert economy.treasury - treasury0 == 2
    assert economy.insurance - insurance0 == 1


def test_slash_authorization(economy):
    economy.lock_stake("A1", "N1", units(10))
    with pytest.raises(Unauthorized):
        economy.slash_stake("A1", "N1", units(1), "x", "producer")


# -- stake pools --------------------------------------------------------------------


def test_pool_shares_and_proportional_slash(economy):
    pool = economy.create_stake_pool(
        "P1", {"A1": units(5_000), "A2": units(3_000), "A3": units(2_000)}
    )
    assert pool.bp == {"A1": 5_000, "A2": 3_000, "A3": 2_000}
    economy.slash_pool("P1", units(1_000), "node failure", "adjudication")
    assert pool.balances == {
        "A1": units(4_500),
        "A2": units(2_700),
        "A3": units(1_800),
    }
    amount = economy.withdraw_pooled_stake("P1", "A2")
    assert amount == units(2_700)
    withdraw_event = economy.log.events[-2]
    assert withdraw_event.event_type is EventType.STAKE_WITHDRAWN
    assert withdraw_event.gas_used == 53_500
    with pytest.raises(NoLockedStake):
        economy.withdraw_pooled_stake("P1", "A2")


def test_pool_minimum_participants(economy):
    with pytest.raises(OutOfRange):
        economy.create_stake_pool("P2", {"A1": units(1), "A2": units(1)})


@given(
    amounts=st.lists(st.integers(1, 10**9), min_size=1, max_size=8),
)
@settings(max_examples=100, deadline=None)
def test_basis_points_sum_exact(amounts):
    bp = basis_points(amounts)
    assert sum(bp) == 10_000
    assert all(b >= 0 for b in bp)
    total = sum(amounts)
    for b, a in zip(bp, amounts):
        assert abs(b - 10_000 * a / total) < 1.0


@given(
    total=st.integers(0, 10**12),
    weights=st.lists(st.integers(1, 10**6), min_size=1, max_size=6),
)
@settings(max_examples=100, deadline=None)
def test_apportion_exact_and_fair(total, weights):
    shares = apportion(total, weights)
    assert sum(shares) == total
    ideal = [total * w / sum(weights) for w in weights]
    for share, want in zip(shares, ideal):
        assert abs(share - want) < 1.0


# -- incentive helpers ----------------------------------------------------------------


def test_bid_score():
    assert bid_score(800, 1.0, 500.0, 1_000.0) == pytest.approx(0.68)
    assert bid_score(0, 0.0, 1_000.0, 1_000.0) == 0.0
    with pytest.raises(PriceExceedsBudget):
        bid_score(500, 0.5, 1_001.0, 1_000.0)
    with pytest.raises(OutOfRange):
        bid_score(1_001, 0.5, 1.0, 2.0)


def test_ema_update():
    assert ema_update(0.5, 1.0) == pytest.approx(0.6)
    assert ema_update(0.5, 1.0, weight=0.5) == pytest.approx(0.75)
    with pytest.raises(OutOfRange):
        ema_update(1.2, 0.5)


def test_opportunity_cost_golden():
    assert opportunity_cost(376_259.0, 0.10, 1.0) == pytest.approx(103.08, abs=0.05)
    assert opportunity_cost(376_259.0, 0.10, 1.0) == pytest.approx(103, abs=0.5)


def test_min_rational_bid_spot_checks():
    # acceptance spots: the break-even bid table's two pinned cells
    from sopgov.security_analytics import p_eff

    detection = p_eff(3, 2, 0.50, 0.12)
    stake_10k = 10_000 / (detection * 0.33)
    bid_a = min_rational_bid(
        opportunity_cost(stake_10k, 0.10, 8 / 24), 1.0,
        protocol_fee=0.02, insurance_fee=0.01, psi_mult=psi_multiplier(500),
    )
    assert bid_a == pytest.approx(4.58, abs=0.02)

    stake_1k = 1_000 / (detection * 0.33)
    bid_b = min_rational_bid(
        opportunity_cost(stake_1k, 0.10, 8 / 24), 1.0,
        protocol_fee=0.01, insurance_fee=0.01, psi_mult=psi_multiplier(800),
    )
    assert bid_b == pytest.approx(1.19, abs=0.02)

    with pytest.raises(OutOfRange):
        min_rational_bid(1.0, 1.0, protocol_fee=0.6, insurance_fee=0.5)


def test_min_bid_table_contains_pinned_cells():
    headers, rows = min_bid_table()
    cells = {(r[0], r[1], r[2]): float(r[3]) for r in rows}
    assert cells[("2%", "10,000", "500")] == pytest.approx(4.58, abs=0.02)
    assert cells[("1%", "1,000", "800")] == pytest.approx(1.19, abs=0.02)
    assert len(rows) == 27


def test_treasury_flow_golden():
    flow = treasury_flow()
    assert isinstance(flow, TreasuryFlow)
    assert flow.fees_in == pytest.approx(20_000)
    assert flow.slash_in == pytest.approx(31_020)
    assert flow.subsidy_out == pytest.approx(97_000)
    assert flow.net == pytest.approx(-47_705, abs=50)
    low_alpha = treasury_flow(alpha=250)
    assert low_alpha.subsidy_out == pytest.approx(48_500, abs=100)


def test_insurance_adequacy():
    ratio, ok = insurance_adequacy(0.01, 10_000.0, 0.0125, 2_000.0)
    assert ratio == pytest.approx(4.0)
    assert ok
    ratio, ok = insurance_adequacy(0.01, 200_000.0, 1.0, 2_001.0)
    assert ratio == pytest.approx(0.9995, abs=1e-4)
    assert not ok
    ratio, ok = insurance_adequacy(0.01, 10_000.0, 0.0, 2_000.0)
    assert math.isinf(ratio) and ok


# -- money conservation under random traffic --------------------------------------------


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_conservation_under_random_settlement(seed):
    import random

    rng = random.Random(seed)
    econ = EconomyLedger(alpha=rng.choice([0, 250, 500, 1000]))
    if rng.random() < 0.5:
        econ.fund_treasury(units(rng.randint(0, 5_000)))
    treasury0, insurance0 = econ.treasury, econ.insurance
    econ.deposit_mission_budget("M1", "s", units(1_000_000))
    for n in range(rng.randint(1, 25)):
        node = f"N{n}"
        econ.allocate_task_budget("M1", node, units(rng.randint(1, 5_000)))
        econ.mark_node_completed(node, f"A{n}")
        econ.settle_reward(node, reputation=rng.randint(0, 1000))
    assert econ.conservation_check()
    # every debited micro-unit is either paid out or banked
    banked = (econ.treasury - treasury0) + (econ.insurance - insurance0)
    assert econ.total_debits == econ.total_payouts + banked
    assert econ.treasury >= 0 and econ.insurance >= 0

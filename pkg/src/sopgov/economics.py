"""Value flows: escrow, reward settlement, staking, slashing, treasury.

All balances are integers in micro-units (one unit = 10**6 micro), so
settlement arithmetic is exact and auditable. The reputation multiplier
is per-mille integer math for the same reason. Analytical helpers at the
bottom (bid scoring, opportunity cost, treasury projection) work in
floats because they model decisions, not balances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .ledger import EventLog, EventType, Ledger, Unauthorized, estimate_gas

MICRO = 10**6
BP_SCALE = 10_000
PSI_SCALE = 1_000

PROTOCOL_FEE_BP = 200
INSURANCE_RESERVE_BP = 100
DEFAULT_ALPHA = 500
MIN_POOL_PARTICIPANTS = 3

SETTLEMENT_AUTHORITIES = frozenset({"execution", "adjudication", "guardian"})

WITHDRAW_POOLED_STAKE_TRACE = (
    ("sstore", "pool.total"),
    ("delete", "pool.share"),
    ("delete", "pool.bp"),
    ("call",),
    ("transfer",),
)


class EconomicsError(Exception):
    pass


class OutOfRange(EconomicsError):
    pass


class NoBudget(EconomicsError):
    pass


class NotCompleted(EconomicsError):
    pass


class NoLockedStake(EconomicsError):
    pass


class PriceExceedsBudget(EconomicsError):
    pass


def psi(rho: int, alpha: int = DEFAULT_ALPHA) -> int:
    """Reputation multiplier in per-mille (1000 = neutral).

    Piecewise linear around the 500 midpoint: agents above it earn a
    premium scaled by alpha, agents below it a discount.
    """
    if not 0 <= rho <= 1000:
        raise OutOfRange(f"reputation {rho} outside [0, 1000]")
    if not 0 <= alpha <= 1000:
        raise OutOfRange(f"alpha {alpha} outside [0, 1000]")
    if rho >= 500:
        value = PSI_SCALE + (rho - 500) * alpha // 1000
    else:
        value = PSI_SCALE - (500 - rho) * alpha // 1000
    return max(0, value)


def psi_multiplier(rho: int, alpha: int = DEFAULT_ALPHA) -> float:
    return psi(rho, alpha) / PSI_SCALE


def apportion(total: int, weights: Sequence[int]) -> List[int]:
    """Split ``total`` across ``weights`` exactly (largest remainder)."""
    if total < 0:
        raise OutOfRange("cannot apportion a negative total")
    weight_sum = sum(weights)
    if weight_sum <= 0:
        raise OutOfRange("weights must sum to a positive value")
    shares = [total * w // weight_sum for w in weights]
    remainders = [(total * w % weight_sum, -i) for i, w in enumerate(weights)]
    leftover = total - sum(shares)
    for _, neg_i in sorted(remainders, reverse=True)[:leftover]:
        shares[-neg_i] += 1
    return shares


def basis_points(amounts: Sequence[int]) -> List[int]:
    """Pool shares in basis points, summing to exactly 10,000."""
    return apportion(BP_SCALE, amounts)


@dataclass(frozen=True)
class SettlementResult:
    node_id: str
    agent_id: str
    budget: int
    fee: int
    reserve: int
    gross: int
    residue: int
    psi_millis: int
    base: int
    subsidy: int
    payout: int
    debit: int
    underflow: bool


@dataclass
class _Escrow:
    sponsor: str
    deposited: int
    remaining: int


@dataclass
class _TaskBudget:
    mission_id: str
    amount: int
    completed: bool = False
    settled: bool = False
    agent_id: Optional[str] = None


@dataclass
class _StakePool:
    pool_id: str
    balances: Dict[str, int]
    bp: Dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.balances.values())


class EconomyLedger:
    """Escrow, settlement, staking, and treasury over the shared event log."""

    def __init__(
        self,
        log: Optional[EventLog] = None,
        registry: Optional[Ledger] = None,
        alpha: int = DEFAULT_ALPHA,
        protocol_fee_bp: int = PROTOCOL_FEE_BP,
        insurance_reserve_bp: int = INSURANCE_RESERVE_BP,
    ) -> None:
        self.log = log if log is not None else EventLog()
        self.registry = registry
        self.alpha = alpha
        self.protocol_fee_bp = protocol_fee_bp
        self.insurance_reserve_bp = insurance_reserve_bp
        self.treasury = 0
        self.insurance = 0
        self.escrows: Dict[str, _Escrow] = {}
        self.task_budgets: Dict[str, _TaskBudget] = {}
        self.locked: Dict[Tuple[str, str], int] = {}
        self.pools: Dict[str, _StakePool] = {}
        # cumulative flow counters, for conservation checks and reports
        self.total_deposited = 0
        self.total_payouts = 0
        self.total_debits = 0
        self.total_fees = 0
        self.total_reserves = 0
        self.total_subsidies = 0
        self.total_residue = 0

    # -- escrow --------------------------------------------------------------

    def fund_treasury(self, amount: int, tick: int = 0) -> None:
        if amount < 0:
            raise OutOfRange("treasury funding must be non-negative")
        self.treasury += amount
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            tick=tick,
            payload={"to": "treasury", "amount": amount, "kind": "treasury_fund"},
        )

    def deposit_mission_budget(
        self, mission_id: str, sponsor: str, amount: int, tick: int = 0
    ) -> None:
        if amount <= 0:
            raise OutOfRange("mission budget must be positive")
        if mission_id in self.escrows:
            escrow = self.escrows[mission_id]
            escrow.deposited += amount
            escrow.remaining += amount
        else:
            self.escrows[mission_id] = _Escrow(sponsor, amount, amount)
        self.total_deposited += amount
        self.log.append(
            EventType.ESCROW_DEPOSITED,
            emitter="economics",
            mission_id=mission_id,
            primary_entity=sponsor,
            tick=tick,
            payload={"mission_id": mission_id, "sponsor": sponsor, "amount": amount},
        )

    def allocate_task_budget(
        self, mission_id: str, node_id: str, amount: int, tick: int = 0
    ) -> None:
        escrow = self.escrows.get(mission_id)
        if escrow is None:
            raise NoBudget(f"no escrow for mission {mission_id}")
        if amount <= 0:
            raise OutOfRange("task budget must be positive")
        if amount > escrow.remaining:
            raise NoBudget(
                f"task budget {amount} exceeds remaining escrow {escrow.remaining}"
            )
        if node_id in self.task_budgets:
            raise NoBudget(f"budget already allocated for node {node_id}")
        escrow.remaining -= amount
        self.task_budgets[node_id] = _TaskBudget(mission_id, amount)
        self.log.append(
            EventType.BUDGET_ALLOCATED,
            emitter="economics",
            mission_id=mission_id,
            node_id=node_id,
            tick=tick,
            payload={"mission_id": mission_id, "node_id": node_id, "amount": amount},
        )

    def mark_node_completed(self, node_id: str, agent_id: str) -> None:
        task = self.task_budgets.get(node_id)
        if task is None:
            raise NoBudget(f"no budget allocated for node {node_id}")
        task.completed = True
        task.agent_id = agent_id

    def escrow_remaining(self, mission_id: str) -> int:
        escrow = self.escrows.get(mission_id)
        return escrow.remaining if escrow else 0

    def refund_escrow(self, mission_id: str, tick: int = 0) -> int:
        escrow = self.escrows.get(mission_id)
        if escrow is None:
            raise NoBudget(f"no escrow for mission {mission_id}")
        amount = escrow.remaining
        escrow.remaining = 0
        self.log.append(
            EventType.ESCROW_RELEASED,
            emitter="economics",
            mission_id=mission_id,
            primary_entity=escrow.sponsor,
            tick=tick,
            payload={"mission_id": mission_id, "amount": amount},
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            mission_id=mission_id,
            primary_entity=escrow.sponsor,
            tick=tick,
            payload={"to": escrow.sponsor, "amount": amount, "kind": "escrow_refund"},
        )
        return amount

    # -- settlement ------------------------------------------------------------

    def settle_reward(
        self,
        node_id: str,
        tick: int = 0,
        reputation: Optional[int] = None,
        agent_id: Optional[str] = None,
    ) -> SettlementResult:
        """Pay out a completed task budget.

        Order of operations is fixed: protocol fee and insurance reserve
        come off the top, the remaining gross is scaled by the
        reputation multiplier, and any subsidy above gross is limited by
        what the treasury (plus this settlement's own inflows) can
        cover. Integer truncation residue goes to the treasury so every
        micro-unit is accounted for.
        """
        task = self.task_budgets.get(node_id)
        if task is None or task.settled:
            raise NoBudget(f"no unsettled budget for node {node_id}")
        if not task.completed:
            raise NotCompleted(f"node {node_id} has not completed")
        agent = agent_id or task.agent_id
        if agent is None:
            raise NotCompleted(f"node {node_id} has no recorded executor")
        if reputation is None:
            if self.registry is None:
                raise OutOfRange("reputation unavailable: no registry bound")
            reputation = self.registry.reputation_of(agent)

        b = task.amount
        fee = b * self.protocol_fee_bp // BP_SCALE
        reserve = b * self.insurance_reserve_bp // BP_SCALE
        gross_bp = BP_SCALE - self.protocol_fee_bp - self.insurance_reserve_bp
        gross = b * gross_bp // BP_SCALE
        residue = b - gross - fee - reserve

        psi_millis = psi(reputation, self.alpha)
        base = gross * min(psi_millis, PSI_SCALE) // PSI_SCALE
        subsidy_needed = gross * max(psi_millis - PSI_SCALE, 0) // PSI_SCALE
        available = self.treasury + fee + residue
        subsidy = min(subsidy_needed, available)
        underflow = subsidy < subsidy_needed
        if underflow:
            self.log.append(
                EventType.TREASURY_UNDERFLOW,
                emitter="economics",
                mission_id=task.mission_id,
                node_id=node_id,
                tick=tick,
                payload={
                    "node_id": node_id,
                    "needed": subsidy_needed,
                    "available": available,
                },
            )

        payout = base + subsidy
        debit = base + fee + reserve + residue

        task.settled = True
        escrow = self.escrows[task.mission_id]
        escrow.remaining += b - debit  # undisbursed discount returns to escrow
        self.treasury += fee + residue - subsidy
        self.insurance += reserve
        self.total_payouts += payout
        self.total_debits += debit
        self.total_fees += fee
        self.total_reserves += reserve
        self.total_subsidies += subsidy
        self.total_residue += residue

        result = SettlementResult(
            node_id=node_id,
            agent_id=agent,
            budget=b,
            fee=fee,
            reserve=reserve,
            gross=gross,
            residue=residue,
            psi_millis=psi_millis,
            base=base,
            subsidy=subsidy,
            payout=payout,
            debit=debit,
            underflow=underflow,
        )
        self.log.append(
            EventType.REWARD_SETTLED,
            emitter="economics",
            mission_id=task.mission_id,
            node_id=node_id,
            primary_entity=agent,
            tick=tick,
            payload={
                "node_id": node_id,
                "agent_id": agent,
                "budget": b,
                "payout": payout,
                "debit": debit,
                "fee": fee,
                "reserve": reserve,
                "subsidy": subsidy,
                "psi": psi_millis,
            },
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            mission_id=task.mission_id,
            node_id=node_id,
            primary_entity=agent,
            tick=tick,
            payload={"to": agent, "amount": payout, "kind": "reward"},
        )
        return result

    # -- staking ---------------------------------------------------------------

    def lock_stake(self, agent_id: str, node_id: str, amount: int, tick: int = 0) -> None:
        if amount <= 0:
            raise OutOfRange("stake must be positive")
        key = (agent_id, node_id)
        self.locked[key] = self.locked.get(key, 0) + amount
        self.log.append(
            EventType.STAKE_LOCKED,
            emitter="economics",
            node_id=node_id,
            primary_entity=agent_id,
            tick=tick,
            payload={"agent_id": agent_id, "node_id": node_id, "amount": amount},
        )

    def locked_stake(self, agent_id: str, node_id: str) -> int:
        return self.locked.get((agent_id, node_id), 0)

    def refund_stake(self, agent_id: str, node_id: str, tick: int = 0) -> int:
        key = (agent_id, node_id)
        amount = self.locked.pop(key, 0)
        if amount == 0:
            raise NoLockedStake(f"{agent_id} has no stake locked on {node_id}")
        self.log.append(
            EventType.STAKE_REFUNDED,
            emitter="economics",
            node_id=node_id,
            primary_entity=agent_id,
            tick=tick,
            payload={"agent_id": agent_id, "node_id": node_id, "amount": amount},
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            node_id=node_id,
            primary_entity=agent_id,
            tick=tick,
            payload={"to": agent_id, "amount": amount, "kind": "stake_refund"},
        )
        return amount

    def slash_stake(
        self,
        agent_id: str,
        node_id: str,
        amount: int,
        reason: str,
        caller: str,
        tick: int = 0,
    ) -> int:
        """Burn locked stake, split 50/50 between treasury and insurance.

        Slashes what is actually locked when the request exceeds it. The
        odd micro-unit of an uneven split goes to the treasury.
        """
        if caller not in SETTLEMENT_AUTHORITIES:
            raise Unauthorized(f"{caller!r} may not slash stake")
        key = (agent_id, node_id)
        locked = self.locked.get(key, 0)
        if locked == 0:
            raise NoLockedStake(f"{agent_id} has no stake locked on {node_id}")
        actual = min(amount, locked)
        self.locked[key] = locked - actual
        if self.locked[key] == 0:
            del self.locked[key]
        to_insurance = actual // 2
        to_treasury = actual - to_insurance
        self.treasury += to_treasury
        self.insurance += to_insurance
        self.log.append(
            EventType.STAKE_SLASHED,
            emitter=caller,
            node_id=node_id,
            primary_entity=agent_id,
            tick=tick,
            payload={
                "agent_id": agent_id,
                "node_id": node_id,
                "requested": amount,
                "actual": actual,
                "to_treasury": to_treasury,
                "to_insurance": to_insurance,
                "reason": reason,
            },
        )
        return actual

    # -- stake pools -------------------------------------------------------------

    def create_stake_pool(
        self, pool_id: str, contributions: Dict[str, int], tick: int = 0
    ) -> _StakePool:
        if pool_id in self.pools:
            raise OutOfRange(f"pool {pool_id} already exists")
        if len(contributions) < MIN_POOL_PARTICIPANTS:
            raise OutOfRange(
                f"stake pool needs at least {MIN_POOL_PARTICIPANTS} participants"
            )
        if any(a <= 0 for a in contributions.values()):
            raise OutOfRange("pool contributions must be positive")
        members = list(contributions)
        bp = basis_points([contributions[m] for m in members])
        pool = _StakePool(
            pool_id=pool_id,
            balances=dict(contributions),
            bp=dict(zip(members, bp)),
        )
        self.pools[pool_id] = pool
        self.log.append(
            EventType.STAKE_POOLED,
            emitter="economics",
            primary_entity=pool_id,
            tick=tick,
            payload={
                "pool_id": pool_id,
                "contributions": dict(contributions),
                "bp": dict(zip(members, bp)),
            },
        )
        return pool

    def slash_pool(
        self, pool_id: str, amount: int, reason: str, caller: str, tick: int = 0
    ) -> int:
        """Slash a pool, apportioning the loss by members' basis points."""
        if caller not in SETTLEMENT_AUTHORITIES:
            raise Unauthorized(f"{caller!r} may not slash stake")
        pool = self.pools.get(pool_id)
        if pool is None or pool.total == 0:
            raise NoLockedStake(f"pool {pool_id} has no stake")
        actual = min(amount, pool.total)
        members = list(pool.balances)
        losses = apportion(actual, [pool.bp[m] for m in members])
        # Basis points are registered at pool creation; balances drift
        # after earlier slashes, so cap each loss and push the overflow
        # onto members with headroom left.
        overflow = 0
        for i, member in enumerate(members):
            if losses[i] > pool.balances[member]:
                overflow += losses[i] - pool.balances[member]
                losses[i] = pool.balances[member]
        while overflow > 0:
            headroom, i = max(
                (pool.balances[m] - losses[j], j) for j, m in enumerate(members)
            )
            if headroom <= 0:
                break
            take = min(headroom, overflow)
            losses[i] += take
            overflow -= take
        for member, loss in zip(members, losses):
            pool.balances[member] -= loss
        realized = sum(losses)
        to_insurance = realized // 2
        to_treasury = realized - to_insurance
        self.treasury += to_treasury
        self.insurance += to_insurance
        self.log.append(
            EventType.STAKE_SLASHED,
            emitter=caller,
            primary_entity=pool_id,
            tick=tick,
            payload={
                "pool_id": pool_id,
                "actual": realized,
                "losses": dict(zip(members, losses)),
                "reason": reason,
            },
        )
        return realized

    def withdraw_pooled_stake(self, pool_id: str, agent_id: str, tick: int = 0) -> int:
        pool = self.pools.get(pool_id)
        if pool is None or agent_id not in pool.balances:
            raise NoLockedStake(f"{agent_id} has no share in pool {pool_id}")
        amount = pool.balances.pop(agent_id)
        pool.bp.pop(agent_id, None)
        self.log.append(
            EventType.STAKE_WITHDRAWN,
            emitter="economics",
            primary_entity=agent_id,
            secondary_entity=pool_id,
            tick=tick,
            gas_used=estimate_gas(WITHDRAW_POOLED_STAKE_TRACE),
            payload={"pool_id": pool_id, "agent_id": agent_id, "amount": amount},
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            primary_entity=agent_id,
            tick=tick,
            payload={"to": agent_id, "amount": amount, "kind": "pool_withdrawal"},
        )
        return amount

    # -- treasury and insurance ---------------------------------------------------

    def claim_insurance(
        self, claimant: str, amount: int, justification: str, caller: str, tick: int = 0
    ) -> int:
        if caller != "adjudication":
            raise Unauthorized(f"{caller!r} may not approve insurance claims")
        if amount <= 0 or amount > self.insurance:
            raise NoBudget(
                f"claim {amount} exceeds insurance reserve {self.insurance}"
            )
        self.insurance -= amount
        self.log.append(
            EventType.INSURANCE_CLAIMED,
            emitter="adjudication",
            primary_entity=claimant,
            tick=tick,
            payload={
                "claimant": claimant,
                "amount": amount,
                "justification": justification,
            },
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            primary_entity=claimant,
            tick=tick,
            payload={"to": claimant, "amount": amount, "kind": "insurance_claim"},
        )
        return amount

    def disburse_treasury(
        self, to: str, amount: int, purpose: str, caller: str, tick: int = 0
    ) -> int:
        if caller != "adjudication":
            raise Unauthorized(f"{caller!r} may not disburse the treasury")
        if amount <= 0 or amount > self.treasury:
            raise NoBudget(f"disbursement {amount} exceeds treasury {self.treasury}")
        self.treasury -= amount
        self.log.append(
            EventType.TREASURY_DISBURSED,
            emitter="adjudication",
            primary_entity=to,
            tick=tick,
            payload={"to": to, "amount": amount, "purpose": purpose},
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="economics",
            primary_entity=to,
            tick=tick,
            payload={"to": to, "amount": amount, "kind": "treasury_disbursement"},
        )
        return amount

    def conservation_check(self) -> bool:
        """Every deposited micro-unit is escrowed, paid, or banked."""
        escrowed = sum(e.remaining for e in self.escrows.values())
        return self.total_deposited == escrowed + self.total_debits


# ---------------------------------------------------------------------------
# Decision-side helpers (floats: these model incentives, not balances)


def bid_score(
    reputation: int, capability_match: float, price: float, budget: float
) -> float:
    """Composite auction score: weighted reputation fit plus price headroom."""
    if not 0 <= reputation <= 1000:
        raise OutOfRange(f"reputation {reputation} outside [0, 1000]")
    if not 0.0 <= capability_match <= 1.0:
        raise OutOfRange(f"capability match {capability_match} outside [0, 1]")
    if budget <= 0:
        raise OutOfRange("budget must be positive")
    if price > budget:
        raise PriceExceedsBudget(f"price {price} exceeds budget {budget}")
    return 0.6 * (reputation / 1000.0) * capability_match + 0.4 * (1.0 - price / budget)


def ema_update(previous: float, sample: float, weight: float = 0.8) -> float:
    """Exponential moving average step for scores on [0, 1]."""
    for name, value in (("previous", previous), ("sample", sample)):
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"{name} score {value} outside [0, 1]")
    if not 0.0 < weight < 1.0:
        raise OutOfRange(f"weight {weight} outside (0, 1)")
    return weight * previous + (1.0 - weight) * sample


def opportunity_cost(stake: float, annual_rate: float, days: float) -> float:
    """Capital cost of locking ``stake`` for ``days`` at a simple annual rate."""
    if stake < 0 or annual_rate < 0 or days < 0:
        raise OutOfRange("opportunity cost inputs must be non-negative")
    return stake * annual_rate * days / 365.0


def min_rational_bid(
    c_opportunity: float,
    c_execution: float,
    protocol_fee: float = 0.02,
    insurance_fee: float = 0.01,
    psi_mult: float = 1.0,
) -> float:
    """Smallest bid at which honest participation breaks even."""
    net = 1.0 - protocol_fee - insurance_fee
    if net <= 0 or psi_mult <= 0:
        raise OutOfRange("fees or multiplier leave no net payout")
    return (c_opportunity + c_execution) / (net * psi_mult)


@dataclass(frozen=True)
class TreasuryFlow:
    fees_in: float
    slash_in: float
    subsidy_out: float
    fixed_out: float
    net: float
    psi_avg: float


def treasury_flow(
    task_count: int = 800,
    avg_task_budget: float = 1_250.0,
    protocol_fee: float = 0.02,
    insurance_fee: float = 0.01,
    failure_rate: float = 0.05,
    avg_stake: float = 4_700.0,
    slash_rate: float = 0.33,
    treasury_share: float = 0.5,
    avg_reputation: int = 700,
    alpha: int = DEFAULT_ALPHA,
    adjudicator_cost: float = 125.0,
    insurance_cost: float = 1_500.0,
    gas_cost: float = 100.0,
) -> TreasuryFlow:
    """Monthly treasury projection under a steady task volume."""
    volume = task_count * avg_task_budget
    fees_in = volume * protocol_fee
    slash_in = task_count * failure_rate * avg_stake * slash_rate * treasury_share
    psi_avg = psi_multiplier(avg_reputation, alpha)
    gross_share = 1.0 - protocol_fee - insurance_fee
    subsidy_out = volume * gross_share * max(psi_avg - 1.0, 0.0)
    fixed_out = adjudicator_cost + insurance_cost + gas_cost
    net = fees_in + slash_in - subsidy_out - fixed_out
    return TreasuryFlow(fees_in, slash_in, subsidy_out, fixed_out, net, psi_avg)


def insurance_adequacy(
    reserve_rate: float,
    mission_volume: float,
    loss_rate: float,
    avg_loss: float,
) -> Tuple[float, bool]:
    """Reserve inflow vs expected loss; infinite (and fine) when losses are zero."""
    if min(reserve_rate, mission_volume, loss_rate, avg_loss) < 0:
        raise OutOfRange("adequacy inputs must be non-negative")
    expected_loss = loss_rate * avg_loss
    if expected_loss == 0:
        return math.inf, True
    ratio = reserve_rate * mission_volume / expected_loss
    return ratio, ratio >= 1.0


# ---------------------------------------------------------------------------
# Table emitters (consumed by the CLI's calc command)

TABLE_TASK_HOURS = 8.0
TABLE_ANNUAL_RATE = 0.10
TABLE_EXEC_COST = 1.0
TABLE_SLASH_RATE = 0.33


def min_bid_table() -> Tuple[List[str], List[List[str]]]:
    """Break-even bids across fee rate, mission value, and reputation."""
    from .security_analytics import p_eff

    detection = p_eff(3, 2, 0.50, 0.12)
    headers = ["protocol_fee", "mission_value", "reputation", "min_bid"]
    rows: List[List[str]] = []
    for fee_pct in (1, 2, 5):
        for v_m in (1_000.0, 10_000.0, 100_000.0):
            for rho in (200, 500, 800):
                stake = v_m / (detection * TABLE_SLASH_RATE)
                c_opp = opportunity_cost(
                    stake, TABLE_ANNUAL_RATE, TABLE_TASK_HOURS / 24.0
                )
                bid = min_rational_bid(
                    c_opp,
                    TABLE_EXEC_COST,
                    protocol_fee=fee_pct / 100.0,
                    insurance_fee=0.01,
                    psi_mult=psi_multiplier(rho),
                )
                rows.append(
                    [f"{fee_pct}%", f"{v_m:,.0f}", str(rho), f"{bid:.2f}"]
                )
    return headers, rows


def treasury_table() -> Tuple[List[str], List[List[str]]]:
    """Monthly treasury balance at the default volume, across alpha settings."""
    headers = [
        "alpha", "psi_avg", "fees_in", "slash_in", "subsidy_out", "fixed_out", "net",
    ]
    rows: List[List[str]] = []
    for alpha in (0, 250, 500, 1000):
        flow = treasury_flow(alpha=alpha)
        rows.append(
            [
                str(alpha),
                f"{flow.psi_avg:.2f}",
                f"{flow.fees_in:,.0f}",
                f"{flow.slash_in:,.0f}",
                f"{flow.subsidy_out:,.0f}",
                f"{flow.fixed_out:,.0f}",
                f"{flow.net:,.0f}",
            ]
        )
    return headers, rows


TABLES = {
    "min-bid": min_bid_table,
    "treasury": treasury_table,
}

"""Registry, gas, and event-log behavior."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sopgov.ledger import (
    GAS,
    REGISTER_AGENT_TRACE,
    VERIFY_CODE_HASH_TRACE,
    ActiveMission,
    AgentType,
    BannedAgent,
    DuplicateRegistration,
    EventLog,
    EventType,
    InactiveProfile,
    InsufficientStake,
    Ledger,
    MalformedDid,
    ManagementRole,
    NotRegistered,
    Unauthorized,
    UnknownAgent,
    estimate_gas,
    merkle_root,
)


@pytest.fixture
def ledger():
    return Ledger()


def register(ledger, n=1, agent_type=AgentType.PRODUCER, stake=1_000):
    ids = []
    for i in range(n):
        ids.append(
            ledger.register_agent(
                f"did:sop:agent{i}", f"principal-{i}", agent_type, stake
            )
        )
    return ids if n > 1 else ids[0]


# -- agent registry ---------------------------------------------------------


def test_register_agent_happy_path(ledger):
    agent_id = register(ledger)
    record = ledger.agents[agent_id]
    assert record.reputation == 500
    assert record.agent_type is AgentType.PRODUCER
    event = ledger.log.events[-1]
    assert event.event_type is EventType.AGENT_REGISTERED
    assert 85_000 <= event.gas_used <= 100_000


def test_register_rejects_malformed_did(ledger):
    with pytest.raises(MalformedDid):
        ledger.register_agent("sop:agent", "p", AgentType.PRODUCER, 1_000)
    with pytest.raises(MalformedDid):
        ledger.register_agent("did:sop:a", "", AgentType.PRODUCER, 1_000)


def test_register_rejects_duplicates_and_low_stake(ledger):
    register(ledger)
    with pytest.raises(DuplicateRegistration):
        ledger.register_agent("did:sop:agent0", "p", AgentType.PRODUCER, 1_000)
    with pytest.raises(InsufficientStake):
        ledger.register_agent("did:sop:other", "p", AgentType.PRODUCER, 999)


def test_banned_did_cannot_reregister(ledger):
    agent_id = register(ledger)
    ledger.ban_agent(agent_id, "fabricated proofs")
    ledger.deregister_agent(agent_id)
    with pytest.raises(BannedAgent):
        ledger.register_agent("did:sop:agent0", "p", AgentType.PRODUCER, 1_000)


def test_deregister_refunds_and_orders_events(ledger):
    agent_id = register(ledger, stake=1_500)
    refund = ledger.deregister_agent(agent_id)
    assert refund == 1_500
    assert agent_id not in ledger.agents
    tail = ledger.log.events[-2:]
    assert [e.event_type for e in tail] == [
        EventType.AGENT_DEREGISTERED,
        EventType.TRANSFER,
    ]
    assert tail[0].seq < tail[1].seq


def test_deregister_guards(ledger):
    with pytest.raises(NotRegistered):
        ledger.deregister_agent("A9999")
    agent_id = register(ledger)
    ledger.mark_active(agent_id, "N1")
    with pytest.raises(ActiveMission):
        ledger.deregister_agent(agent_id)
    ledger.clear_active(agent_id, "N1")
    ledger.deregister_agent(agent_id)


def test_update_reputation_authorization(ledger):
    agent_id = register(ledger)
    assert ledger.update_reputation(agent_id, 40, "verified output", "execution") == 540
    with pytest.raises(Unauthorized):
        ledger.update_reputation(agent_id, 40, "self-serving", "producer")
    with pytest.raises(UnknownAgent):
        ledger.update_reputation("A9999", 1, "x", "execution")


@given(deltas=st.lists(st.integers(-1500, 1500), max_size=30))
@settings(max_examples=50, deadline=None)
def test_reputation_always_clamped(deltas):
    ledger = Ledger()
    agent_id = ledger.register_agent("did:sop:x", "p", AgentType.PRODUCER, 1_000)
    for delta in deltas:
        score = ledger.update_reputation(agent_id, delta, "fuzz", "adjudication")
        assert 0 <= score <= 1000


def test_sybil_identity_cost():
    # five identities plus ten low-tier task stakes
    ledger = Ledger()
    total = 0
    for i in range(5):
        ledger.register_agent(f"did:sop:s{i}", "p", AgentType.PRODUCER, 1_000)
        total += 1_000
    total += 10 * 150
    assert total == 6_500


# -- management envelopes -----------------------------------------------------


def test_management_profile_validation(ledger):
    agent_id = register(ledger, agent_type=AgentType.MANAGEMENT)
    ledger.bind_management_profile(
        agent_id,
        ManagementRole.REGULATORY,
        permitted_ops={"updateReputation", "signDecision"},
        prohibited_ops={"disburseTreasury"},
    )
    assert ledger.validate_management_operation(agent_id, "updateReputation")
    assert ledger.log.events[-1].event_type is EventType.OPERATION_VALIDATED
    before = len(ledger.log.events)
    assert not ledger.validate_management_operation(agent_id, "disburseTreasury")
    assert len(ledger.log.events) == before  # denials are not validations


def test_management_profile_guards(ledger):
    agent_id = register(ledger, agent_type=AgentType.MANAGEMENT)
    with pytest.raises(InactiveProfile):
        ledger.validate_management_operation(agent_id, "anything")
    ledger.bind_management_profile(
        agent_id, ManagementRole.LEGISLATIVE, permitted_ops={"openSession"}
    )
    ledger.revoke_management_profile(agent_id)
    with pytest.raises(InactiveProfile):
        ledger.validate_management_operation(agent_id, "openSession")
    with pytest.raises(ValueError):
        ledger.bind_management_profile(
            agent_id, ManagementRole.LEGISLATIVE,
            permitted_ops={"a"}, prohibited_ops={"a"},
        )


# -- services -----------------------------------------------------------------


def test_service_registration_and_code_hash(ledger):
    owner = register(ledger)
    ledger.register_service(
        "svc-embed", "ab" * 32, "cd" * 32, "ipfs://x", (5_000, 512, 4), owner
    )
    assert ledger.verify_code_hash("svc-embed", "ab" * 32)
    event = ledger.log.events[-1]
    assert event.event_type is EventType.CODEHASH_VERIFIED
    assert event.gas_used == 2_100
    assert not ledger.verify_code_hash("svc-embed", "ff" * 32)
    assert ledger.log.events[-1].event_type is EventType.CODEHASH_MISMATCH


def test_service_guards(ledger):
    owner = register(ledger)
    with pytest.raises(ValueError):
        ledger.register_service(
            "svc", "0" * 64, "cd" * 32, "ipfs://x", (1, 1, 1), owner
        )
    with pytest.raises(UnknownAgent):
        ledger.register_service(
            "svc", "ab" * 32, "cd" * 32, "ipfs://x", (1, 1, 1), "A9999"
        )


# -- gas model ------------------------------------------------------------------


def test_gas_primitive_pricing():
    assert estimate_gas(REGISTER_AGENT_TRACE) == 88_500
    assert estimate_gas(VERIFY_CODE_HASH_TRACE) == 2_100
    # a lone SSTORE to an already-warm slot
    assert estimate_gas([("sstore", "x")], warm_slots=["x"]) == 2_900
    # first touch cold, second warm
    assert estimate_gas([("sstore", "x"), ("sstore", "x")]) == 22_900
    assert estimate_gas([("delete", "a"), ("call",), ("transfer",)]) == 28_500


def test_gas_trace_guards():
    with pytest.raises(ValueError):
        estimate_gas([])
    with pytest.raises(ValueError):
        estimate_gas([("warp", "x")])
    assert GAS.cold_sstore == 20_000


# -- event log -------------------------------------------------------------------


def test_event_line_round_trip(ledger):
    register(ledger)
    for event in ledger.log.events:
        assert type(event).from_line(event.to_line()) == event


def test_event_log_import_preserves_sequence(ledger):
    register(ledger, n=3)
    clone = EventLog.from_lines(ledger.log.export_lines())
    assert clone.events == ledger.log.events
    nxt = clone.append(EventType.SNAPSHOT_SEALED, emitter="test")
    assert nxt.seq == len(ledger.log.events)


def test_merkle_root_matches_manual_tree(ledger):
    register(ledger, n=3)
    events = ledger.log.events
    import hashlib

    h = [e.content_hash() for e in events]
    h01 = hashlib.sha256((h[0] + h[1]).encode()).hexdigest()
    h22 = hashlib.sha256((h[2] + h[2]).encode()).hexdigest()
    want = hashlib.sha256((h01 + h22).encode()).hexdigest()
    assert merkle_root(events) == want
    assert merkle_root(events[:1]) == events[0].content_hash()


def test_cei_ordering_no_transfer_before_state(ledger):
    # per operation the transfer event must be the last of its slice
    agent_id = register(ledger, stake=2_000)
    ledger.deregister_agent(agent_id)
    seen_transfer = False
    for event in ledger.log.events:
        if event.event_type is EventType.TRANSFER:
            seen_transfer = True
        elif seen_transfer:
            pytest.fail("state event recorded after transfer within operation")


# -- replay ------------------------------------------------------------------------


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_replay_rebuilds_identical_state(seed):
    import random

    rng = random.Random(seed)
    ledger = Ledger()
    live = []
    for step in range(rng.randint(5, 40)):
        roll = rng.random()
        if roll < 0.45 or not live:
            did = f"did:sop:r{step}"
            aid = ledger.register_agent(did, "p", AgentType.PRODUCER, 1_000)
            live.append(aid)
        elif roll < 0.75:
            ledger.update_reputation(
                rng.choice(live), rng.randint(-200, 200), "fuzz", "execution"
            )
        elif roll < 0.9:
            aid = live.pop(rng.randrange(len(live)))
            ledger.deregister_agent(aid)
        else:
            aid = rng.choice(live)
            if not ledger.agents[aid].banned:
                ledger.ban_agent(aid, "fuzz")
    rebuilt = Ledger.replay(ledger.log.events)
    assert rebuilt.snapshot() == ledger.snapshot()
    assert rebuilt.state_hash() == ledger.state_hash()

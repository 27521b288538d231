"""Shared builders for the worked three-task session used across tests."""

from sopgov.ledger import AgentType, EventLog, Ledger
from sopgov.legislature import (
    CodedContractSpecification,
    ConstitutionalParams,
    DagEdge,
    DagNode,
    DagProposal,
    DagSpec,
    IdentityAttestation,
    IdentityVerificationRequest,
    LegislativeApproval,
    LegislativeSession,
    RegulatoryDecision,
    TaskBid,
    advance_session,
    compile_dag,
)

TRACE_STAKES = {"LOW": 150, "MEDIUM": 200, "HIGH": 2_000}
TRACE_REPUTATIONS = {"fetcher": 720, "cls-a": 580, "cls-b": 610, "agg": 850, "cls-c": 790}

FETCH_HASH = "11" * 32
CLASSIFY_HASH = "22" * 32
AGGREGATE_HASH = "33" * 32


def build_registry(log=None):
    """Ledger with the five producers, two managers, and three services."""
    ledger = Ledger(log=log)
    agents = {}
    for name, reputation in TRACE_REPUTATIONS.items():
        aid = ledger.register_agent(
            f"did:sop:{name}", f"principal-{name}", AgentType.PRODUCER, 1_000
        )
        ledger.update_reputation(aid, reputation - 500, "history", "adjudication")
        agents[name] = aid
    for name in ("leg", "reg"):
        agents[name] = ledger.register_agent(
            f"did:sop:{name}", f"principal-{name}", AgentType.MANAGEMENT, 1_000
        )
    ledger.register_service(
        "svc-fetch", FETCH_HASH, "a1" * 32, "srv://fetch", (60_000, 256, 8),
        agents["fetcher"],
    )
    ledger.register_service(
        "svc-classify", CLASSIFY_HASH, "a2" * 32, "srv://classify",
        (120_000, 512, 4), agents["cls-a"],
    )
    ledger.register_service(
        "svc-aggregate", AGGREGATE_HASH, "a3" * 32, "srv://aggregate",
        (300_000, 512, 2), agents["agg"],
    )
    return ledger, agents


def build_trace_spec():
    nodes = [
        DagNode(
            node_id="T1", label="fetch", service_id="svc-fetch",
            input_schema_hash="f1" * 32, output_schema_hash="f2" * 32,
            pop_tier=1, token_budget=5_000, timeout_ms=60_000, risk_tier="LOW",
        ),
        DagNode(
            node_id="T2", label="classify", service_id="svc-classify",
            input_schema_hash="f2" * 32, output_schema_hash="f3" * 32,
            pop_tier=2, token_budget=8_000, timeout_ms=120_000, risk_tier="MEDIUM",
            redundancy_factor=3, consensus_threshold=2, output_kind="set",
        ),
        DagNode(
            node_id="T3", label="aggregate", service_id="svc-aggregate",
            input_schema_hash="f3" * 32, output_schema_hash="f4" * 32,
            pop_tier=3, token_budget=6_000, timeout_ms=300_000, risk_tier="HIGH",
        ),
    ]
    edges = [DagEdge("T1", "T2", "documents"), DagEdge("T2", "T3", "labels")]
    return DagSpec(
        mission_id="M-TRACE",
        epoch=0,
        nodes=nodes,
        edges=edges,
        budget_total=20_000,
        stake_schedule=dict(TRACE_STAKES),
        gate_predicates=[{"predicateId": "outputNonEmpty", "kind": "automated"}],
    )


def trace_bids(agents):
    return [
        TaskBid("", "BID01", "T1", "svc-fetch", FETCH_HASH, 4_500, 150, 1),
        TaskBid("", "BID02", "T2", "svc-classify", CLASSIFY_HASH, 7_500, 200, 2),
        TaskBid("", "BID03", "T2", "svc-classify", CLASSIFY_HASH, 7_800, 220, 2),
        TaskBid("", "BID04", "T3", "svc-aggregate", AGGREGATE_HASH, 5_500, 2_000, 3),
        TaskBid("", "BID05", "T2", "svc-classify", CLASSIFY_HASH, 7_000, 250, 2),
    ], ["fetcher", "cls-a", "cls-b", "agg", "cls-c"]


def run_trace_session(log=None):
    """Replay the worked three-task session to DEPLOYED; returns (session, spec)."""
    ledger, agents = build_registry(log=log)
    producers = [agents[n] for n in ("fetcher", "cls-a", "cls-b", "agg", "cls-c")]
    session = LegislativeSession(
        session_id="S-TRACE",
        mission_id="M-TRACE",
        epoch=0,
        legislative_agent=agents["leg"],
        regulatory_agent=agents["reg"],
        participants=producers,
        params=ConstitutionalParams(reputation_floor=400),
        stake_schedule=dict(TRACE_STAKES),
        registry=ledger,
        log=log,
    )
    tick = 1_000
    advance_session(session, IdentityVerificationRequest(agents["leg"]), tick)
    for name in ("fetcher", "cls-a", "cls-b", "agg", "cls-c"):
        tick += 100
        advance_session(
            session,
            IdentityAttestation(
                agents["leg"], agents[name], f"did:sop:{name}", f"sig-{name}", 0
            ),
            tick,
        )
    spec = build_trace_spec()
    tick += 500
    advance_session(session, DagProposal(agents["leg"], spec), tick)
    bids, bidder_names = trace_bids(agents)
    for bid, name in zip(bids, bidder_names):
        tick += 200
        bid = TaskBid(
            agents[name], bid.bid_id, bid.node_id, bid.service_id,
            bid.code_hash, bid.price, bid.stake, bid.accepted_tier,
        )
        advance_session(session, bid, tick)
    tick += 500
    session.close_bidding(tick)
    assignment = {"T1": agents["fetcher"], "T2": agents["cls-c"], "T3": agents["agg"]}
    tick += 500
    advance_session(
        session, RegulatoryDecision(agents["reg"], True, assignment), tick
    )
    tick += 1_000
    advance_session(
        session,
        CodedContractSpecification(agents["leg"], compile_dag(spec, session.params)),
        tick,
    )
    tick += 500
    advance_session(
        session, LegislativeApproval(agents["leg"], agents["leg"], agents["reg"]), tick
    )
    return session, spec, ledger, agents


# -- execution FSM fuzzing ----------------------------------------------------

FUZZ_HASH = "cc" * 32


def build_fuzz_mission(rng, faults=None):
    """Diamond mission (tiers 1/2/2/3) over a throwaway registry."""
    from sopgov import execution as ex

    registry = Ledger()
    agents = [
        registry.register_agent(f"did:sop:fuzz-{i}", f"did:h:fz{i}", AgentType.PRODUCER, 1_000)
        for i in range(4)
    ]
    registry.register_service(
        "svc-fuzz", FUZZ_HASH, "dd" * 32, "https://fuzz", (1, 1, 1), owner=agents[0]
    )
    anchor = ex.output_digest("good-out", "good-proof")
    nodes = [
        DagNode("F1", "root", "svc-fuzz", "aa" * 32, anchor, 1, 1_000, 60_000, "LOW"),
        DagNode("F2", "left", "svc-fuzz", "aa" * 32, "bb" * 32, 2, 1_000, 60_000, "MEDIUM",
                redundancy_factor=3, consensus_threshold=2, output_kind="label"),
        DagNode("F3", "right", "svc-fuzz", "aa" * 32, "bb" * 32, 2, 1_000, 60_000, "MEDIUM",
                redundancy_factor=3, consensus_threshold=2, output_kind="numeric"),
        DagNode("F4", "join", "svc-fuzz", "aa" * 32, "bb" * 32, 3, 1_000, 300_000, "HIGH"),
    ]
    edges = [DagEdge("F1", "F2"), DagEdge("F1", "F3"), DagEdge("F2", "F4"), DagEdge("F3", "F4")]
    spec = DagSpec(
        "M-FUZZ", 0, nodes, edges, 10_000,
        gate_predicates=[{"predicateId": "fuzzGate", "kind": "automated"}],
    )
    assignment = {node.node_id: agents[i] for i, node in enumerate(nodes)}
    mission = ex.launch_mission(spec, assignment, registry=registry, faults=faults)
    return mission, agents


def fuzz_missions(steps, seed, per_mission=200):
    """Random-walk the execution state machines for a step budget.

    Guarded rejections are expected; anything that breaks a safety
    predicate or the transition tables is collected and returned.
    Returns (steps_executed, violations).
    """
    import random

    from sopgov import execution as ex

    rng = random.Random(seed)
    node_ids = ("F1", "F2", "F3", "F4")
    executors = ("e1", "e2", "e3", "e4")
    decisions = list(ex.FreezeDecision)
    fault_types = sorted(ex.FAULT_TYPES)
    violations = []
    executed = 0
    while executed < steps and not violations:
        faults = None
        if rng.random() < 0.3:
            schedule = []
            if rng.random() < 0.5:
                schedule.append((rng.randrange(500_000), "commit_failure",
                                 rng.choice(node_ids)))
            if rng.random() < 0.3:
                schedule.append((rng.randrange(500_000), "oracle_silence",
                                 rng.choice(node_ids)))
            if rng.random() < 0.3:
                schedule.append((rng.randrange(200_000), "sequencer_outage",
                                 str(rng.randrange(1_000_000, 12_000_000))))
            faults = ex.FaultInjector(schedule)
        mission, agents = build_fuzz_mission(rng, faults=faults)
        tick = 0
        for _ in range(min(per_mission, steps - executed)):
            executed += 1
            tick += rng.choice((1, 7, 100, 2_000, 40_000, 350_000))
            node_id = rng.choice(node_ids)
            node = mission.nodes[node_id]
            action = rng.randrange(14)
            try:
                if action == 0:
                    bad = rng.random() < 0.15
                    mission.route_task(node_id, tick,
                                       live_hash="ee" * 32 if bad else None)
                elif action == 1:
                    good = rng.random() < 0.7
                    if node.pop_tier == 1:
                        output, proof = ("good-out", "good-proof") if good else ("bad", "bad")
                    elif node.output_kind == "numeric":
                        output = 100.0 + rng.uniform(0, 2 if good else 60)
                        proof = "p"
                    else:
                        output = "alpha" if good else rng.choice(("alpha", "beta", "gamma"))
                        proof = "p"
                    mission.submit_pop(node_id, node.pop_tier, output, proof,
                                       executor=rng.choice(executors), tick=tick)
                elif action == 2:
                    record = mission.proofs.get(node_id)
                    if record is not None:
                        mission.advance_node(node_id, record.status, tick)
                elif action == 3:
                    mission.resolve_review(node_id, rng.random() < 0.7,
                                           adjudicator="adj-fz", tick=tick)
                elif action == 4:
                    kind = rng.choice(("DEVIATION", "TOOL_LIMIT_EXCEEDED",
                                       "MESSAGE_VOLUME_EXCEEDED"))
                    magnitude = rng.uniform(0, 4) if kind == "DEVIATION" else rng.randrange(0, 200)
                    mission.report_anomaly(node_id, kind, magnitude, tick,
                                           secondary_magnitude=rng.uniform(0, 4))
                elif action == 5:
                    weights = (0.4, 0.3, 0.25, 0.05)
                    decision = rng.choices(decisions, weights=weights)[0]
                    mission.resolve_freeze(node_id, decision, tick, adjudicator="adj-fz")
                elif action == 6:
                    mission.check_timeouts(tick)
                elif action == 7:
                    signal = ex.FaultSignal(rng.choice(fault_types), node_id,
                                            mission.assignment.get(node_id, ""),
                                            tier=node.pop_tier)
                    mission.refine(signal, tick)
                elif action == 8:
                    mission.apply_reassignment(node_id, rng.choice(agents), tick=tick)
                elif action == 9:
                    from sopgov.execution import PredicateCheck
                    gas = rng.choice((1_000, 250_000))
                    mission.gate_filter(
                        [PredicateCheck("fuzzGate", lambda m: True, gas_cost=gas)],
                        tick,
                    )
                elif action == 10:
                    mission.poll_sequencer(tick)
                elif action == 11:
                    if mission.state is ex.MissionPhase.DEGRADED:
                        mission.exit_degraded(tick, authorized_by="adj-fz")
                    elif mission.state is ex.MissionPhase.ACTIVE:
                        mission.begin_execution(tick)
                elif action == 12:
                    if mission.guardian.emergency_stop:
                        mission.guardian.clear_emergency_stop(
                            mission.assignment.get(node_id, ""), tick)
                elif action == 13:
                    if rng.random() < 0.1:
                        mission.mirror.crash()
                        ex.freeze_mirror_recover(mission.mirror, [mission])
                    else:
                        mission.route_task(node_id, tick)
            except ex.InvariantViolation as bad:
                violations.append(f"step {executed}: {bad}")
            except ex.ExecutionError:
                pass
            leftover = mission.check_invariants()
            if leftover:
                violations.extend(f"step {executed}: {v}" for v in leftover)
            if mission.state in (ex.MissionPhase.COMPLETED, ex.MissionPhase.ABORTED):
                break
    return executed, violations

"""Coordination detection, review decisions, override governance, watchdog."""

import csv
import io
import math
import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sopgov.adjudication import (
    APPROVAL_RATE_SAMPLE_FLOOR,
    CRITICAL_BLOC_SHARE,
    Adjudicator,
    AdjudicatorPool,
    AdjudicatorWatchdog,
    ConflictOfInterest,
    CoordinationReport,
    InconsistentBallots,
    MalformedAlert,
    QuorumNotMet,
    ReviewAlert,
    ReviewDecision,
    RotationLimit,
    SelfVote,
    Unauthorized,
    WatchdogParams,
    amendment_weakens,
    confidence_from_deviation,
    detect_coordination,
    hitl_decide,
    kendall_tau,
    pairwise_tau_matrix,
    tau_null_sigma,
    top_k_overlap,
)
from sopgov.execution import (
    FreezeDecision,
    GateOutcome,
    MissionPhase,
    NodePhase,
    PopResult,
    PredicateCheck,
    launch_mission,
    output_digest,
)
from sopgov.ledger import AgentType, EventLog, EventType, Ledger
from sopgov.legislature import ConstitutionalParams, DagNode, DagSpec

SLATE = tuple(f"cand-{i:02d}" for i in range(20))


def shuffled(rng, slate=SLATE):
    ballot = list(slate)
    rng.shuffle(ballot)
    return ballot


def random_ballots(rng, voters, slate=SLATE):
    return {f"v{i:03d}": shuffled(rng, slate) for i in range(voters)}


def with_bloc(rng, voters, bloc_size, slate=SLATE):
    """Random electorate with one identical-ranking bloc appended."""
    ballots = random_ballots(rng, voters - bloc_size, slate)
    shared = shuffled(rng, slate)
    for i in range(bloc_size):
        ballots[f"bloc-{i}"] = shared[:]
    return ballots, tuple(sorted(f"bloc-{i}" for i in range(bloc_size)))


def one_node_mission(tier=1, anchor=("good", "p"), mission_id="M-ADJ"):
    log = EventLog()
    ledger = Ledger(log=log)
    producer = ledger.register_agent(
        "did:sop:px-N1", "principal-N1", AgentType.PRODUCER, 1_000)
    ledger.register_service(
        "svc-N1", "ab" * 32, "b1" * 32, "srv://n1", (1, 1, 1), producer)
    node = DagNode(
        node_id="N1", label="n1", service_id="svc-N1",
        input_schema_hash="e1" * 32,
        output_schema_hash=output_digest(*anchor) if tier == 1 else "e2" * 32,
        pop_tier=tier, token_budget=1_000, timeout_ms=300_000,
        risk_tier="LOW", redundancy_factor=1, consensus_threshold=1,
        output_kind="set",
    )
    spec = DagSpec(
        mission_id=mission_id, epoch=0, nodes=[node], edges=[],
        budget_total=50_000,
        stake_schedule={"LOW": 100, "MEDIUM": 200, "HIGH": 500},
        gate_predicates=[{"predicateId": "outputNonEmpty", "kind": "automated"}],
    )
    mission = launch_mission(spec, {"N1": producer},
                             registry=ledger, economy=None, log=log)
    return mission, ledger, producer


def frozen_mission(mission_id="M-ADJ"):
    mission, ledger, producer = one_node_mission(mission_id=mission_id)
    mission.route_task("N1", tick=100)
    mission.report_anomaly("N1", "DEVIATION", 2.8, tick=200,
                           secondary_magnitude=2.6)
    assert mission.node_states["N1"] is NodePhase.FROZEN
    return mission, ledger, producer


def reviewed_mission():
    mission, ledger, producer = one_node_mission(tier=3)
    mission.route_task("N1", tick=100)
    mission.submit_pop("N1", 3, "draft", "att", tick=200)
    assert mission.node_states["N1"] is NodePhase.PENDING_REVIEW
    return mission, ledger, producer


def pool_of(n=7, registry=None, log=None, senior="adj-0", **kwargs):
    members = [Adjudicator(f"adj-{i}", f"overseer-{i}") for i in range(n)]
    return AdjudicatorPool(members, registry=registry, log=log,
                           senior=senior, **kwargs)


def adjudication_events(log):
    return [e for e in log.events if e.emitter == "adjudication"]


# ---------------------------------------------------------------------------
# rank statistics
# ---------------------------------------------------------------------------

def test_kendall_tau_identical_and_reversed():
    ranking = ["a", "b", "c", "d", "e"]
    assert kendall_tau(ranking, ranking) == 1.0
    assert kendall_tau(ranking, list(reversed(ranking))) == -1.0


def test_kendall_tau_hand_case():
    # one discordant pair (b, c) out of six: (5 - 1) / 6
    assert kendall_tau(["a", "b", "c", "d"],
                       ["a", "c", "b", "d"]) == pytest.approx(4 / 6)


def test_kendall_tau_matches_inversion_count():
    # independent route: tau = 1 - 4 * inversions / (m * (m - 1))
    rng = random.Random(11)
    for m in (3, 5, 8, 12):
        slate = [f"x{i}" for i in range(m)]
        for _ in range(25):
            a, b = shuffled(rng, slate), shuffled(rng, slate)
            rank_in_b = {c: i for i, c in enumerate(b)}
            image = [rank_in_b[c] for c in a]
            inversions = sum(
                1
                for i in range(m)
                for j in range(i + 1, m)
                if image[i] > image[j]
            )
            expected = 1 - 4 * inversions / (m * (m - 1))
            assert kendall_tau(a, b) == pytest.approx(expected)


def test_kendall_tau_rejects_bad_rankings():
    with pytest.raises(InconsistentBallots):
        kendall_tau(["a", "b"], ["a", "c"])
    with pytest.raises(InconsistentBallots):
        kendall_tau(["a", "a", "b"], ["a", "b", "a"])
    with pytest.raises(InconsistentBallots):
        kendall_tau(["a"], ["a"])


def test_tau_null_sigma_goldens():
    assert tau_null_sigma(20) == pytest.approx(
        math.sqrt(2 * 45 / (9 * 20 * 19)))
    assert 6 * tau_null_sigma(20) == pytest.approx(0.97333, abs=1e-5)
    assert tau_null_sigma(5) == pytest.approx(math.sqrt(30 / 180))
    # shrinks as the slate grows: more pairs, tighter null
    sigmas = [tau_null_sigma(m) for m in range(2, 30)]
    assert sigmas == sorted(sigmas, reverse=True)


def test_top_k_overlap_cases():
    a = ["a", "b", "c", "d", "e", "f"]
    assert top_k_overlap(a, a, 5) == 1.0
    assert top_k_overlap(a, list(reversed(a)), 3) == 0.0
    # top-4 sets {a,b,c,d} vs {a,b,e,f}: 2 shared of 6
    assert top_k_overlap(a, ["a", "b", "e", "f", "c", "d"], 4) == pytest.approx(2 / 6)
    assert top_k_overlap(a, a, 50) == 1.0  # k past the end is the whole ranking
    with pytest.raises(ValueError):
        top_k_overlap(a, a, 0)


def test_pairwise_matrix_agrees_with_scalar_route():
    import numpy as np

    rng = random.Random(23)
    slate = [f"x{i}" for i in range(8)]
    ballots = {f"v{i}": shuffled(rng, slate) for i in range(12)}
    voters = sorted(ballots)
    index = {c: i for i, c in enumerate(slate)}
    positions = np.array([
        [ballots[v].index(c) for c in slate] for v in voters
    ])
    matrix = pairwise_tau_matrix(positions)
    for i, j in combinations(range(len(voters)), 2):
        scalar = kendall_tau(ballots[voters[i]], ballots[voters[j]])
        assert matrix[i, j] == pytest.approx(scalar)
        assert matrix[j, i] == pytest.approx(scalar)
    assert all(matrix[i, i] == pytest.approx(1.0) for i in range(len(voters)))
    assert index  # slate order fixed by construction


@given(st.permutations(list("abcdef")))
@settings(max_examples=40, deadline=None)
def test_kendall_tau_symmetric_and_bounded(perm):
    base = list("abcdef")
    tau = kendall_tau(base, perm)
    assert -1.0 <= tau <= 1.0
    assert kendall_tau(perm, base) == pytest.approx(tau)


# ---------------------------------------------------------------------------
# coordination detection
# ---------------------------------------------------------------------------

def test_identical_bloc_among_random_voters_fully_flagged():
    rng = random.Random(7)
    ballots, bloc = with_bloc(rng, voters=100, bloc_size=5)
    report = detect_coordination(ballots)
    assert len(report.pairs) == 10  # C(5, 2)
    for pair in report.pairs:
        assert pair.tau == pytest.approx(1.0)
        assert pair.overlap == pytest.approx(1.0)
        assert pair.voter_a in bloc and pair.voter_b in bloc
    assert report.blocs == (bloc,)
    assert report.flagged_voters == bloc
    # five of a hundred ballots is well under the critical share
    assert report.critical_blocs == ()


def test_bloc_share_marks_critical():
    rng = random.Random(9)
    ballots, bloc = with_bloc(rng, voters=25, bloc_size=5)
    report = detect_coordination(ballots)
    assert report.blocs == (bloc,)
    assert report.critical_blocs == (bloc,)  # 5 / 25 hits the 20% share

    ballots, bloc = with_bloc(rng, voters=26, bloc_size=5)
    report = detect_coordination(ballots)
    assert report.blocs == (bloc,)
    assert report.critical_blocs == ()
    assert CRITICAL_BLOC_SHARE == 0.2


def test_reversed_pair_not_flagged():
    ranking = shuffled(random.Random(3))
    report = detect_coordination({
        "v-fwd": ranking,
        "v-rev": list(reversed(ranking)),
    })
    assert report.pairs == ()
    assert report.blocs == ()


def test_tau_threshold_is_strict():
    ranking = shuffled(random.Random(4))
    ballots = {"v1": ranking[:], "v2": ranking[:]}
    assert detect_coordination(ballots).pairs  # default threshold < 1
    assert detect_coordination(ballots, tau_threshold=1.0).pairs == ()


def test_overlap_filter_is_conjunctive():
    ranking = shuffled(random.Random(5))
    ballots = {"v1": ranking[:], "v2": ranking[:]}
    flagged = detect_coordination(ballots, jaccard_threshold=1.0)
    assert len(flagged.pairs) == 1
    assert detect_coordination(ballots, jaccard_threshold=1.01).pairs == ()


def test_ballot_validation():
    ranking = shuffled(random.Random(6))
    with pytest.raises(InconsistentBallots):
        detect_coordination({"v1": ranking})
    with pytest.raises(InconsistentBallots):
        detect_coordination({"v1": ranking, "v2": ranking[:10]})
    doubled = ranking[:-1] + [ranking[0]]
    with pytest.raises(InconsistentBallots):
        detect_coordination({"v1": ranking, "v2": doubled})
    with pytest.raises(InconsistentBallots):
        detect_coordination({"v1": ["only"], "v2": ["only"]})


def test_report_csv_round_trip():
    rng = random.Random(8)
    ballots, bloc = with_bloc(rng, voters=30, bloc_size=4)
    report = detect_coordination(ballots, round_index=12)
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == ["round", "voter_a", "voter_b", "tau", "jaccard", "bloc_id"]
    assert len(rows) == 1 + len(report.pairs) == 1 + 6
    for row, pair in zip(rows[1:], report.pairs):
        assert row[0] == "12"
        assert (row[1], row[2]) == (pair.voter_a, pair.voter_b)
        assert float(row[3]) == pytest.approx(pair.tau)
        assert float(row[4]) == pytest.approx(pair.overlap)
        assert row[5] == "0"
    assert report.bloc_of("bloc-0") == 0
    assert report.bloc_of("v000") == -1


def test_detection_power_seeded_smoke():
    # full 100-trial sweep lives in the acceptance suite
    for seed in range(20):
        rng = random.Random(1_000 + seed)
        ballots, bloc = with_bloc(rng, voters=100, bloc_size=5)
        report = detect_coordination(ballots)
        assert report.blocs == (bloc,), f"seed {seed} missed the bloc"
        assert len(report.pairs) == 10


def test_independent_rankings_rarely_flagged_smoke():
    flagged_trials = 0
    for seed in range(200):
        rng = random.Random(5_000 + seed)
        report = detect_coordination(random_ballots(rng, voters=50))
        if report.pairs:
            flagged_trials += 1
    assert flagged_trials == 0


# ---------------------------------------------------------------------------
# review decisions
# ---------------------------------------------------------------------------

def freeze_alert(confidence, quality, critical=False, mission="M-ADJ"):
    return ReviewAlert("freeze", confidence, quality,
                       mission_id=mission, critical=critical)


def test_decision_table():
    assert hitl_decide(freeze_alert(0.5, 0.9)) is ReviewDecision.FALSE_POSITIVE
    assert hitl_decide(freeze_alert(0.9, 0.4)) is ReviewDecision.TASK_REASSIGN
    assert hitl_decide(freeze_alert(0.9, 0.7)) is ReviewDecision.RESUME_WITH_AMENDMENT
    # boundaries: confidence must exceed 0.8; quality 0.6 is acceptable
    assert hitl_decide(freeze_alert(0.8, 0.0)) is ReviewDecision.FALSE_POSITIVE
    assert hitl_decide(freeze_alert(0.81, 0.6)) is ReviewDecision.RESUME_WITH_AMENDMENT
    assert hitl_decide(freeze_alert(0.81, 0.59)) is ReviewDecision.TASK_REASSIGN


def test_tier3_review_approves_on_quality_alone():
    approve = ReviewAlert("tier3_review", 0.0, 0.6)
    reject = ReviewAlert("tier3_review", 1.0, 0.59)
    assert hitl_decide(approve) is ReviewDecision.APPROVE
    assert hitl_decide(reject) is ReviewDecision.REJECT


def test_third_critical_alert_terminates():
    alert = freeze_alert(0.9, 0.9, critical=True)
    assert hitl_decide(alert, prior_critical_alerts=0) is ReviewDecision.RESUME_WITH_AMENDMENT
    assert hitl_decide(alert, prior_critical_alerts=1) is ReviewDecision.RESUME_WITH_AMENDMENT
    assert hitl_decide(alert, prior_critical_alerts=2) is ReviewDecision.TERMINATE_MISSION
    # non-critical alerts never escalate, whatever the history
    benign = freeze_alert(0.5, 0.9, critical=False)
    assert hitl_decide(benign, prior_critical_alerts=5) is ReviewDecision.FALSE_POSITIVE


def test_malformed_alerts():
    with pytest.raises(MalformedAlert):
        hitl_decide(ReviewAlert("bogus", 0.5, 0.5))
    with pytest.raises(MalformedAlert):
        hitl_decide(ReviewAlert("freeze", 1.2, 0.5))
    with pytest.raises(MalformedAlert):
        hitl_decide(ReviewAlert("freeze", 0.5, -0.1))
    with pytest.raises(MalformedAlert):
        hitl_decide(freeze_alert(0.5, 0.5), prior_critical_alerts=-1)


def test_confidence_from_deviation_saturates():
    assert confidence_from_deviation(2.8) == pytest.approx(0.7)
    assert confidence_from_deviation(4.0) == 1.0
    assert confidence_from_deviation(10.0) == 1.0
    assert confidence_from_deviation(0.0) == 0.0
    with pytest.raises(MalformedAlert):
        confidence_from_deviation(-0.5)


def test_pool_counts_critical_alerts_per_mission():
    pool = pool_of()
    critical = freeze_alert(0.9, 0.9, critical=True)
    assert pool.review_alert(critical) is ReviewDecision.RESUME_WITH_AMENDMENT
    assert pool.review_alert(critical) is ReviewDecision.RESUME_WITH_AMENDMENT
    assert pool.review_alert(critical) is ReviewDecision.TERMINATE_MISSION
    # another mission keeps its own count
    other = freeze_alert(0.9, 0.9, critical=True, mission="M-OTHER")
    assert pool.review_alert(other) is ReviewDecision.RESUME_WITH_AMENDMENT


# ---------------------------------------------------------------------------
# pool governance
# ---------------------------------------------------------------------------

def test_quorum_floor_exhaustive():
    pool = pool_of()
    assert pool.quorum_floor == 5
    for quorum in range(1, 21):
        if quorum < 5:
            with pytest.raises(QuorumNotMet):
                pool.set_quorum(quorum)
        else:
            pool.set_quorum(quorum)
            assert pool.quorum == quorum
    with pytest.raises(QuorumNotMet):
        pool_of(quorum=4)


def test_duplicate_member_rejected():
    twin = [Adjudicator("adj-0", "p0"), Adjudicator("adj-0", "p1")]
    others = [Adjudicator(f"adj-{i}", f"p{i}") for i in range(1, 6)]
    with pytest.raises(ValueError):
        AdjudicatorPool(twin + others)


def test_unknown_or_banned_adjudicator_unauthorized():
    mission, ledger, _ = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    with pytest.raises(Unauthorized):
        pool.override("UNFREEZE", "N1", "adj-99", "who", mission=mission)
    pool.members["adj-1"].banned = True
    with pytest.raises(Unauthorized):
        pool.override("UNFREEZE", "N1", "adj-1", "banned", mission=mission)


def test_registry_identity_must_be_monitor():
    mission, ledger, _ = frozen_mission()
    producer = ledger.register_agent(
        "did:sop:prod-1", "overseer-1", AgentType.PRODUCER, 1_000)
    monitor = ledger.register_agent(
        "did:sop:mon-2", "overseer-2", AgentType.MONITOR, 1_000)
    pool = pool_of(registry=ledger, log=mission.log)
    pool.members["adj-1"].agent_id = producer
    pool.members["adj-2"].agent_id = monitor
    with pytest.raises(Unauthorized):
        pool.override("UNFREEZE", "N1", "adj-1", "wrong type", mission=mission)
    assert pool.override("UNFREEZE", "N1", "adj-2", "benign",
                         mission=mission) is NodePhase.ELIGIBLE

    ledger.ban_agent(monitor, "separate offense")
    mission.report_anomaly("N1", "DEVIATION", 2.9, tick=400,
                           secondary_magnitude=2.7)
    with pytest.raises(Unauthorized):
        pool.override("UNFREEZE", "N1", "adj-2", "now banned", mission=mission)


def test_conflict_via_shared_principal():
    mission, ledger, _ = frozen_mission()
    members = [Adjudicator(f"adj-{i}", f"overseer-{i}") for i in range(6)]
    members.append(Adjudicator("adj-owner", "principal-N1"))
    pool = AdjudicatorPool(members, registry=ledger, log=mission.log,
                           senior="adj-0")
    with pytest.raises(ConflictOfInterest):
        pool.override("UNFREEZE", "N1", "adj-owner", "own producer",
                      mission=mission)
    assert pool.override("UNFREEZE", "N1", "adj-1", "clean reviewer",
                         mission=mission) is NodePhase.ELIGIBLE


def test_conflict_via_declared_pair():
    mission, ledger, producer = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    pool.register_conflict("overseer-3", producer)
    with pytest.raises(ConflictOfInterest):
        pool.override("UNFREEZE", "N1", "adj-3", "declared tie", mission=mission)


def refreeze(mission, tick):
    mission.report_anomaly("N1", "DEVIATION", 2.9, tick=tick,
                           secondary_magnitude=2.7)
    assert mission.node_states["N1"] is NodePhase.FROZEN


def test_rotation_blocks_third_consecutive_sole_approval():
    mission, ledger, _ = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("UNFREEZE", "N1", "adj-1", "first", mission=mission, tick=300)
    refreeze(mission, 400)
    pool.override("UNFREEZE", "N1", "adj-1", "second", mission=mission, tick=500)
    refreeze(mission, 600)
    with pytest.raises(RotationLimit):
        pool.override("UNFREEZE", "N1", "adj-1", "third", mission=mission, tick=700)
    # a different adjudicator resets the streak
    pool.override("UNFREEZE", "N1", "adj-2", "rotated", mission=mission, tick=800)
    refreeze(mission, 900)
    pool.override("UNFREEZE", "N1", "adj-1", "back again", mission=mission, tick=1_000)


def test_cosigned_decision_breaks_sole_streak():
    mission, ledger, _ = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("UNFREEZE", "N1", "adj-1", "solo 1", mission=mission, tick=300)
    refreeze(mission, 400)
    pool.override("UNFREEZE", "N1", "adj-1", "solo 2", mission=mission, tick=500)
    refreeze(mission, 600)
    pool.override("UNFREEZE", "N1", "adj-1", "co-signed", mission=mission,
                  tick=700, cosigners=("adj-2",))
    refreeze(mission, 800)
    # the streak restarted: two more solo approvals are fine
    pool.override("UNFREEZE", "N1", "adj-1", "solo 3", mission=mission, tick=900)
    refreeze(mission, 1_000)
    pool.override("UNFREEZE", "N1", "adj-1", "solo 4", mission=mission, tick=1_100)


def test_rotation_categories_and_missions_independent():
    mission, ledger, _ = frozen_mission()
    other, other_ledger, _ = frozen_mission(mission_id="M-OTHER")
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("UNFREEZE", "N1", "adj-1", "a", mission=mission, tick=300)
    refreeze(mission, 400)
    pool.override("UNFREEZE", "N1", "adj-1", "b", mission=mission, tick=500)
    # same category on a different mission starts its own streak
    assert pool.override("UNFREEZE", "N1", "adj-1", "c",
                         mission=other, tick=600) is NodePhase.ELIGIBLE
    # a different category on the first mission is also untouched
    review, review_ledger, _ = reviewed_mission()
    assert pool.override("RESOLVE_REVIEW", "N1", "adj-1", "d", mission=review,
                         decision=True, tick=700) is PopResult.APPROVED


def test_unilateral_path_reserved_for_senior():
    mission, ledger, producer = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log, senior="adj-0")
    for i in (1, 2, 3, 4):
        pool.register_conflict(f"overseer-{i}", producer)
    # 3 clean members < ceil(7 / 2): ordinary members are locked out
    with pytest.raises(QuorumNotMet):
        pool.override("UNFREEZE", "N1", "adj-5", "not senior", mission=mission)
    before = len(adjudication_events(mission.log))
    assert pool.override("UNFREEZE", "N1", "adj-0", "emergency",
                         mission=mission, tick=300) is NodePhase.ELIGIBLE
    fresh = adjudication_events(mission.log)[before:]
    assert [e.event_type for e in fresh] == [EventType.UNILATERAL_OVERRIDE]
    assert fresh[0].payload["post_mission_audit"] is True
    assert pool.audit_queue == [(300, "adj-0", "UNFREEZE")]


def test_clear_emergency_stop_needs_two_clean_cosigners():
    mission, ledger, producer = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    guardian = mission.guardian
    guardian.emergency_stop = True
    with pytest.raises(QuorumNotMet):
        pool.override("CLEAR_EMERGENCY_STOP", producer, "adj-0", "why",
                      guardian=guardian, cosigners=("adj-1",))
    # self-signature and conflicted signatures do not count
    pool.register_conflict("overseer-2", producer)
    with pytest.raises(QuorumNotMet):
        pool.override("CLEAR_EMERGENCY_STOP", producer, "adj-0", "why",
                      guardian=guardian, mission=mission,
                      cosigners=("adj-0", "adj-2", "adj-3"))
    window = pool.override("CLEAR_EMERGENCY_STOP", producer, "adj-0", "why",
                           guardian=guardian, cosigners=("adj-1", "adj-3"),
                           tick=500)
    assert guardian.emergency_stop is False
    assert window == 2 * guardian.params.base_escalation_window_ms


def test_override_rejects_unknown_action():
    pool = pool_of()
    with pytest.raises(ValueError):
        pool.override("REWRITE_HISTORY", "N1", "adj-0", "no such power")


def test_unfreeze_dispatch_applies_chosen_decision():
    mission, ledger, _ = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    state = pool.override("UNFREEZE", "N1", "adj-1", "benign loop",
                          mission=mission, tick=300)
    assert state is NodePhase.ELIGIBLE
    refreeze(mission, 400)
    state = pool.override("UNFREEZE", "N1", "adj-2", "needs a patch",
                          mission=mission, tick=500,
                          decision=FreezeDecision.RESUME_WITH_AMENDMENT)
    assert state is NodePhase.ELIGIBLE
    assert ledger.reputation_of(mission.assignment["N1"]) < 500


def test_resolve_review_dispatch():
    mission, ledger, _ = reviewed_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    result = pool.override("RESOLVE_REVIEW", "N1", "adj-1", "meets the brief",
                           mission=mission, decision=True, tick=300)
    assert result is PopResult.APPROVED
    assert mission.node_states["N1"] is not NodePhase.PENDING_REVIEW

    mission, ledger, _ = reviewed_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    result = pool.override("RESOLVE_REVIEW", "N1", "adj-1", "off spec",
                           mission=mission, decision=False, tick=300)
    assert result is PopResult.REJECTED
    # the node fails but the mission survives for refinement
    assert mission.node_states["N1"] is NodePhase.FAILED
    assert mission.state is MissionPhase.EXECUTING


def test_release_and_veto_dispatch():
    mission, ledger, _ = one_node_mission()
    mission.route_task("N1", tick=100)
    mission.submit_pop("N1", 1, "good", "p", tick=200)
    mission.advance_node("N1", PopResult.APPROVED, tick=300)
    burner = PredicateCheck("outputNonEmpty", lambda m: True, gas_cost=200_001)
    assert mission.gate_filter([burner], tick=400) is GateOutcome.HELD
    pool = pool_of(registry=ledger, log=mission.log)
    assert pool.override("RELEASE_OUTPUT", "N1", "adj-1", "human-checked",
                         mission=mission, tick=500) is GateOutcome.RELEASED
    assert mission.state is MissionPhase.COMPLETED

    mission, ledger, _ = one_node_mission()
    mission.route_task("N1", tick=100)
    mission.submit_pop("N1", 1, "good", "p", tick=200)
    mission.advance_node("N1", PopResult.APPROVED, tick=300)
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("VETO_OUTPUT", "N1", "adj-1", "harmful output",
                  mission=mission, tick=400)
    assert mission.gate_outcome is GateOutcome.VETOED
    assert mission.state is MissionPhase.FAILED


def test_abort_sanction_and_ban_dispatch():
    mission, ledger, producer = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    assert pool.override("SANCTION_AGENT", producer, "adj-1",
                         "repeated deviations", value=-150, tick=300) == 350
    with pytest.raises(ValueError):
        pool_of().override("SANCTION_AGENT", producer, "adj-1", "no registry")
    assert pool.override("ABORT_MISSION", "M-ADJ", "adj-2", "unrecoverable",
                         mission=mission, tick=400) is MissionPhase.ABORTED
    assert mission.abort_reason == "unrecoverable"
    pool.override("BAN_AGENT", producer, "adj-3", "fabricated proofs", tick=500)
    assert ledger.agents[producer].banned


def test_amend_parameter_dispatch_and_weakening():
    params = ConstitutionalParams()
    pool = pool_of()
    amendment = pool.override("AMEND_PARAMETER", "deviation_threshold_sigma",
                              "adj-0", "loosen the firewall",
                              params=params, value=3.0)
    assert amendment.weakening is True
    assert amendment.old_value == 2.0 and amendment.new_value == 3.0
    assert amendment.params.deviation_threshold_sigma == 3.0
    assert params.deviation_threshold_sigma == 2.0  # original untouched
    tightened = pool.override("AMEND_PARAMETER", "deviation_threshold_sigma",
                              "adj-1", "tighten it back",
                              params=amendment.params, value=1.5)
    assert tightened.weakening is False
    with pytest.raises(ValueError):
        pool.override("AMEND_PARAMETER", "no_such_knob", "adj-0", "x",
                      params=params, value=1)
    with pytest.raises(ValueError):
        pool.override("AMEND_PARAMETER", "reputation_floor", "adj-0", "x",
                      params=params)
    with pytest.raises(ValueError):
        pool.override("AMEND_PARAMETER", "reputation_floor", "adj-0", "x",
                      value=50)


def test_amendment_weakening_direction_map():
    assert amendment_weakens("max_tool_invocations", 40, 60)
    assert not amendment_weakens("max_tool_invocations", 40, 30)
    assert amendment_weakens("min_fairness_score", 600, 400)
    assert not amendment_weakens("min_fairness_score", 600, 700)
    assert not amendment_weakens("unmapped_parameter", 1, 2)


def test_exit_degraded_dispatch():
    mission, ledger, _ = one_node_mission()
    mission.enter_degraded(tick=1_000)
    assert mission.state is MissionPhase.DEGRADED
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("EXIT_DEGRADED", "M-ADJ", "adj-1", "sequencer restored",
                  mission=mission, tick=2_000)
    assert mission.state is not MissionPhase.DEGRADED


def test_every_override_logs_exactly_one_audit_event():
    mission, ledger, producer = frozen_mission()
    pool = pool_of(registry=ledger, log=mission.log)
    pool.override("UNFREEZE", "N1", "adj-1", "one", mission=mission, tick=300)
    pool.override("SANCTION_AGENT", producer, "adj-2", "two", value=-10, tick=400)
    refreeze(mission, 500)
    pool.override("UNFREEZE", "N1", "adj-3", "three", mission=mission, tick=600)
    pool.override("ABORT_MISSION", "M-ADJ", "adj-4", "four",
                  mission=mission, tick=700)
    audit = [e for e in adjudication_events(mission.log)
             if e.event_type in (EventType.OVERRIDE_ACTION,
                                 EventType.UNILATERAL_OVERRIDE)]
    assert len(audit) == 4
    for event in audit:
        assert len(event.payload["justification_digest"]) == 64
    history = pool.action_history
    assert [len(history[a]) for a in ("adj-1", "adj-2", "adj-3", "adj-4")] == [1, 1, 1, 1]


# ---------------------------------------------------------------------------
# impeachment
# ---------------------------------------------------------------------------

def test_impeachment_supermajority():
    log = EventLog()
    pool = pool_of(log=log)
    votes = ["adj-0", "adj-1", "adj-2", "adj-3"]
    assert pool.impeach("adj-0", "adj-6", votes) == "pending"
    assert pool.members["adj-6"].banned is False
    # a later round adds the fifth vote; ceil(2 * 7 / 3) = 5
    assert pool.impeach("adj-0", "adj-6", ["adj-4"]) == "impeached"
    target = pool.members["adj-6"]
    assert target.banned and target.stake == 0
    resolved = [e for e in log.events
                if e.event_type is EventType.IMPEACHMENT_RESOLVED]
    assert len(resolved) == 1
    assert resolved[0].payload["votes"] == 5
    assert resolved[0].payload["threshold"] == 5
    assert resolved[0].payload["forfeited_stake"] == 5_000


def test_impeachment_self_votes_rejected():
    pool = pool_of()
    with pytest.raises(SelfVote):
        pool.impeach("adj-0", "adj-5", ["adj-5", "adj-1", "adj-2"])
    with pytest.raises(SelfVote):
        pool.impeach("adj-5", "adj-5", ["adj-1", "adj-2"])
    with pytest.raises(Unauthorized):
        pool.impeach("adj-0", "adj-5", ["adj-1", "adj-99"])
    with pytest.raises(Unauthorized):
        pool.impeach("adj-0", "adj-99", ["adj-1", "adj-2"])


def test_impeachment_bans_registry_identity():
    log = EventLog()
    ledger = Ledger(log=log)
    monitor = ledger.register_agent(
        "did:sop:mon-6", "overseer-6", AgentType.MONITOR, 1_000)
    pool = pool_of(registry=ledger, log=log)
    pool.members["adj-6"].agent_id = monitor
    pool.impeach("adj-0", "adj-6",
                 ["adj-0", "adj-1", "adj-2", "adj-3", "adj-4"])
    assert ledger.agents[monitor].banned


def test_impeachment_threshold_tracks_active_pool():
    pool = pool_of()
    pool.impeach("adj-0", "adj-6",
                 ["adj-0", "adj-1", "adj-2", "adj-3", "adj-4"])
    # six members remain: ceil(2 * 6 / 3) = 4 votes now suffice
    assert pool.impeach("adj-0", "adj-5",
                        ["adj-0", "adj-1", "adj-2", "adj-3"]) == "impeached"


# ---------------------------------------------------------------------------
# watchdog
# ---------------------------------------------------------------------------

def test_twenty_first_consecutive_approval_alerts():
    log = EventLog()
    pool = pool_of(log=log)
    watchdog = AdjudicatorWatchdog(pool)
    for i in range(20):
        assert watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=i) is None
    rule = watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=20)
    assert rule == "consecutive_approvals"
    assert pool.members["adj-1"].flagged
    assert watchdog.system_frozen is False
    alerts = [e for e in log.events if e.event_type is EventType.WATCHDOG_ALERT]
    assert len(alerts) == 1
    assert alerts[0].payload == {"adjudicator": "adj-1",
                                 "rule": "consecutive_approvals",
                                 "anomaly_count": 1}


def test_rejection_resets_approval_streak():
    watchdog = AdjudicatorWatchdog(pool_of())
    for i in range(6):
        watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=i)
    watchdog.record("adj-1", "RESOLVE_REVIEW", False, tick=6)
    assert watchdog.consecutive_approvals["adj-1"] == 0
    for i in range(5):
        watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=7 + i)
    assert watchdog.consecutive_approvals["adj-1"] == 5


def test_second_anomaly_same_member_freezes_system():
    log = EventLog()
    pool = pool_of(log=log)
    watchdog = AdjudicatorWatchdog(pool)
    for i in range(21):
        watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=i)
    assert watchdog.system_frozen is False
    rule = watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=21)
    assert rule == "consecutive_approvals"
    assert watchdog.system_frozen is True and watchdog.frozen_at == 21
    freezes = [e for e in log.events if e.event_type is EventType.WATCHDOG_FREEZE]
    assert len(freezes) == 1


def test_single_anomalies_across_members_do_not_freeze():
    watchdog = AdjudicatorWatchdog(pool_of())
    for member in ("adj-1", "adj-2"):
        for i in range(21):
            watchdog.record(member, "RESOLVE_REVIEW", True, tick=i)
    assert watchdog.system_frozen is False


def frozen_watchdog():
    log = EventLog()
    pool = pool_of(log=log)
    watchdog = AdjudicatorWatchdog(pool)
    for i in range(22):
        watchdog.record("adj-1", "RESOLVE_REVIEW", True, tick=i)
    assert watchdog.system_frozen
    return watchdog, pool, log


def test_lift_requires_unanimous_clean_signatures():
    watchdog, pool, log = frozen_watchdog()
    clean = sorted(m.adjudicator_id for m in pool.active_members()
                   if not m.flagged)
    # the flagged member's signature voids the attempt outright
    assert watchdog.lift_freeze(clean + ["adj-1"]) is False
    # missing any clean member also fails
    assert watchdog.lift_freeze(clean[:-1]) is False
    assert watchdog.lift_freeze(clean) is True
    assert watchdog.system_frozen is False
    approvals = [e for e in log.events
                 if e.event_type is EventType.UNFREEZE_APPROVED]
    assert len(approvals) == 1 and approvals[0].payload["scope"] == "watchdog"
    # lifting an unfrozen system is a no-op
    assert watchdog.lift_freeze(clean) is False


def test_flagged_signature_never_lifts_seeded_sequences():
    watchdog, pool, _ = frozen_watchdog()
    clean = [m.adjudicator_id for m in pool.active_members() if not m.flagged]
    rng = random.Random(99)
    for _ in range(50):
        signers = set(rng.sample(clean, rng.randint(0, len(clean))))
        signers.add("adj-1")  # the flagged member signs every attempt
        assert watchdog.lift_freeze(signers) is False
        assert watchdog.system_frozen is True


def test_degraded_governance_after_72h():
    watchdog, _, _ = frozen_watchdog()
    deadline = watchdog.frozen_at + watchdog.params.max_freeze_ticks
    assert watchdog.params.max_freeze_ticks == 259_200_000
    assert watchdog.in_degraded_governance(deadline) is False
    assert watchdog.in_degraded_governance(deadline + 1) is True


def test_weakening_amendments_past_limit_alert():
    watchdog = AdjudicatorWatchdog(pool_of())
    for i in range(3):
        assert watchdog.record("adj-2", "AMEND_PARAMETER", True,
                               tick=i, weakening=True) is None
    rule = watchdog.record("adj-2", "AMEND_PARAMETER", True,
                           tick=3, weakening=True)
    assert rule == "parameter_weakening"


def test_approval_rate_rule_needs_sample_beyond_floor():
    watchdog = AdjudicatorWatchdog(pool_of())
    outcomes = []
    for i in range(21):
        approved = i != 5  # one rejection keeps the consecutive rule quiet
        outcomes.append(
            watchdog.record("adj-3", "RESOLVE_REVIEW", approved, tick=i * 1_000))
    assert outcomes[:-1] == [None] * 20
    assert outcomes[-1] == "approval_rate"  # 20 of 21 is 95.2%
    assert APPROVAL_RATE_SAMPLE_FLOOR == 20


def test_window_pruning_forgives_old_actions():
    params = WatchdogParams()
    watchdog = AdjudicatorWatchdog(pool_of(), params=params)
    for i in range(10):
        watchdog.record("adj-4", "RESOLVE_REVIEW", True, tick=i)
    watchdog.record("adj-4", "RESOLVE_REVIEW", False, tick=10)
    late = params.window_ticks + 1_000
    for i in range(15):
        rule = watchdog.record("adj-4", "RESOLVE_REVIEW", True, tick=late + i)
        assert rule is None
    # the early batch fell out of the window, so the rate rule lacks sample
    assert len(watchdog.actions["adj-4"]) == 15


def test_watchdog_rejects_unknown_adjudicator():
    watchdog = AdjudicatorWatchdog(pool_of())
    with pytest.raises(Unauthorized):
        watchdog.record("adj-99", "RESOLVE_REVIEW", True)

"""Human oversight layer: ballot-coordination detection, deterministic
review decisions, override dispatch under quorum / rotation / conflict
rules, impeachment votes, and an approval-pattern watchdog.

Detection and decision functions are pure. State changes flow only
through :class:`AdjudicatorPool` and :class:`AdjudicatorWatchdog`, which
write audit events to the shared event log.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import (
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import numpy as np

from .ledger import AgentType, EventLog, EventType, Ledger

# -- coordination detection defaults ----------------------------------------

SIGMA_MULTIPLIER = 6.0        # rank-correlation flag threshold, in null sigmas
TOP_K_DEFAULT = 5             # prefix length for the overlap check
TOP_K_JACCARD_MIN = 0.5       # overlap a flagged pair must also exceed
CRITICAL_BLOC_SHARE = 0.2     # bloc size / ballots cast that delays tallying

# -- review decision thresholds ----------------------------------------------

CONFIDENCE_THRESHOLD = 0.8    # anomaly confidence above which action is taken
QUALITY_THRESHOLD = 0.6       # output quality splitting amend vs. reassign
CRITICAL_ALERT_LIMIT = 2      # prior criticals after which the next terminates
CONFIDENCE_SATURATION_SIGMA = 4.0

# -- pool governance ----------------------------------------------------------

QUORUM_FAULT_TOLERANCE = 2            # f: tolerated compromised adjudicators
RECOMMENDED_QUORUM = 7
ADJUDICATOR_STAKE = 5_000
ROTATION_SOLE_APPROVAL_LIMIT = 2      # consecutive sole approvals per category
CLEAR_STOP_COSIGNERS = 2
IMPEACHMENT_NUMERATOR = 2             # ceil(2 * pool / 3) supporting votes
IMPEACHMENT_DENOMINATOR = 3

# -- watchdog ------------------------------------------------------------------

WATCHDOG_WINDOW_TICKS = 30 * 24 * 3_600_000     # 30 days of 1 ms ticks
WATCHDOG_MAX_FREEZE_TICKS = 72 * 3_600_000      # 72 h before degraded mode
MAX_APPROVAL_RATE = 0.95
MAX_CONSECUTIVE_APPROVALS = 20
PARAM_WEAKENING_LIMIT = 3
APPROVAL_RATE_SAMPLE_FLOOR = 20       # rate rule engages strictly beyond this sample

# Constitutional parameters where raising the value loosens a guard, and
# ones where lowering it does.  Used to classify amendments for the
# watchdog's weakening counter.
_WEAKER_WHEN_RAISED = frozenset({
    "deviation_threshold_sigma",
    "max_tool_invocations",
    "max_message_volume",
    "escalation_freeze_count",
    "base_escalation_window_ms",
    "mission_budget_cap",
    "max_node_timeout_ms",
})
_WEAKER_WHEN_LOWERED = frozenset({
    "min_fairness_score",
    "reputation_floor",
    "min_node_timeout_ms",
    "min_human_review_timeout_ms",
})


class AdjudicationError(Exception):
    """Base class for oversight-layer failures."""


class Unauthorized(AdjudicationError):
    """Caller is not a registered, active monitor."""


class ConflictOfInterest(AdjudicationError):
    """Adjudicator's principal is tied to a mission participant."""


class RotationLimit(AdjudicationError):
    """Too many consecutive sole approvals of one category on one mission."""


class QuorumNotMet(AdjudicationError):
    """Not enough clean adjudicators (or co-signers) for a binding action."""


class MalformedAlert(AdjudicationError):
    """Review alert with out-of-range scores or an unknown kind."""


class InconsistentBallots(AdjudicationError):
    """Ballot set is not a collection of complete rankings of one slate."""


class SelfVote(AdjudicationError):
    """Impeachment target appearing in its own vote set."""


# ---------------------------------------------------------------------------
# Rank statistics (pure)
# ---------------------------------------------------------------------------

def kendall_tau(ranking_a: Sequence[str], ranking_b: Sequence[str]) -> float:
    """Rank correlation of two complete strict rankings.

    No-ties formulation: (concordant - discordant) / C(m, 2). Identical
    rankings score 1.0, exact reversals -1.0.
    """
    if len(set(ranking_a)) != len(ranking_a):
        raise InconsistentBallots("first ranking repeats a candidate")
    if set(ranking_a) != set(ranking_b) or len(ranking_a) != len(ranking_b):
        raise InconsistentBallots("rankings cover different candidate slates")
    m = len(ranking_a)
    if m < 2:
        raise InconsistentBallots("rank correlation needs at least two candidates")
    position_b = {candidate: i for i, candidate in enumerate(ranking_b)}
    concordant = 0
    discordant = 0
    for first, second in combinations(ranking_a, 2):
        if position_b[first] < position_b[second]:
            concordant += 1
        else:
            discordant += 1
    return (concordant - discordant) / (m * (m - 1) / 2)


def tau_null_sigma(m: int) -> float:
    """Standard deviation of the rank correlation between two independent
    uniform-random rankings of m candidates."""
    if m < 2:
        raise InconsistentBallots("rank correlation needs at least two candidates")
    return math.sqrt(2.0 * (2 * m + 5) / (9.0 * m * (m - 1)))


def top_k_overlap(ranking_a: Sequence[str], ranking_b: Sequence[str],
                  k: int = TOP_K_DEFAULT) -> float:
    """Jaccard similarity of the two top-k prefixes."""
    if k < 1:
        raise ValueError("prefix length must be positive")
    head_a = set(ranking_a[:k])
    head_b = set(ranking_b[:k])
    union = head_a | head_b
    if not union:
        return 1.0
    return len(head_a & head_b) / len(union)


@dataclass(frozen=True)
class FlaggedPair:
    voter_a: str
    voter_b: str
    tau: float
    overlap: float


@dataclass(frozen=True)
class CoordinationReport:
    """Outcome of one detection pass over a round's ballots."""

    round_index: int
    tau_threshold: float
    jaccard_threshold: float
    k_top: int
    ballots_cast: int
    pairs: Tuple[FlaggedPair, ...]
    blocs: Tuple[Tuple[str, ...], ...]
    critical_blocs: Tuple[Tuple[str, ...], ...]

    @property
    def flagged_voters(self) -> Tuple[str, ...]:
        members: Set[str] = set()
        for bloc in self.blocs:
            members.update(bloc)
        return tuple(sorted(members))

    def bloc_of(self, voter: str) -> int:
        """Index of the bloc containing the voter, or -1."""
        for index, bloc in enumerate(self.blocs):
            if voter in bloc:
                return index
        return -1

    def to_csv(self) -> str:
        """One row per flagged pair: round, pair, tau, jaccard, bloc id."""
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["round", "voter_a", "voter_b", "tau", "jaccard", "bloc_id"])
        for pair in self.pairs:
            writer.writerow([
                self.round_index,
                pair.voter_a,
                pair.voter_b,
                f"{pair.tau:.6f}",
                f"{pair.overlap:.6f}",
                self.bloc_of(pair.voter_a),
            ])
        return buffer.getvalue()


def _rank_matrix(ballots: Mapping[str, Sequence[str]],
                 voters: Sequence[str],
                 slate: Sequence[str]) -> np.ndarray:
    """positions[v, c] = rank of candidate c in voter v's ballot."""
    index = {candidate: i for i, candidate in enumerate(slate)}
    positions = np.empty((len(voters), len(slate)), dtype=np.int32)
    for row, voter in enumerate(voters):
        for rank, candidate in enumerate(ballots[voter]):
            positions[row, index[candidate]] = rank
    return positions


def pairwise_tau_matrix(positions: np.ndarray) -> np.ndarray:
    """All-pairs rank correlation from a rank-position matrix.

    Each ballot becomes a +-1 vector over the C(m, 2) candidate pairs;
    the correlation of two ballots is the mean elementwise product, so
    the whole matrix is one normalized inner product.
    """
    m = positions.shape[1]
    upper_i, upper_j = np.triu_indices(m, k=1)
    signs = np.sign(positions[:, upper_j] - positions[:, upper_i]).astype(np.float64)
    return (signs @ signs.T) / upper_i.size


def detect_coordination(
    ballots: Mapping[str, Sequence[str]],
    tau_threshold: Optional[float] = None,
    k_top: int = TOP_K_DEFAULT,
    jaccard_threshold: float = TOP_K_JACCARD_MIN,
    round_index: int = 0,
    sigma_multiplier: float = SIGMA_MULTIPLIER,
) -> CoordinationReport:
    """Flag voter pairs whose rankings agree far beyond chance.

    A pair is flagged when its rank correlation exceeds the threshold
    (default: ``sigma_multiplier`` null sigmas for the slate size) and
    its top-k overlap is at least ``jaccard_threshold``. Flagged pairs
    are merged into blocs by connected components; blocs holding at
    least ``CRITICAL_BLOC_SHARE`` of the cast ballots are reported as
    critical. Pure: no events, no state.
    """
    if len(ballots) < 2:
        raise InconsistentBallots("coordination detection needs at least two ballots")
    voters = sorted(ballots)
    slate = tuple(ballots[voters[0]])
    if len(set(slate)) != len(slate):
        raise InconsistentBallots(f"ballot for {voters[0]} repeats a candidate")
    if len(slate) < 2:
        raise InconsistentBallots("rank correlation needs at least two candidates")
    slate_set = set(slate)
    for voter in voters[1:]:
        ranking = ballots[voter]
        if len(set(ranking)) != len(ranking):
            raise InconsistentBallots(f"ballot for {voter} repeats a candidate")
        if set(ranking) != slate_set:
            raise InconsistentBallots(
                f"ballot for {voter} does not cover the shared candidate slate")
    if tau_threshold is None:
        tau_threshold = sigma_multiplier * tau_null_sigma(len(slate))

    positions = _rank_matrix(ballots, voters, slate)
    correlations = pairwise_tau_matrix(positions)

    flagged: List[FlaggedPair] = []
    adjacency: Dict[str, Set[str]] = {}
    hot = np.argwhere(np.triu(correlations > tau_threshold, k=1))
    for row, col in hot:
        voter_a, voter_b = voters[row], voters[col]
        overlap = top_k_overlap(ballots[voter_a], ballots[voter_b], k_top)
        if overlap < jaccard_threshold:
            continue
        flagged.append(FlaggedPair(voter_a, voter_b,
                                   float(correlations[row, col]), overlap))
        adjacency.setdefault(voter_a, set()).add(voter_b)
        adjacency.setdefault(voter_b, set()).add(voter_a)

    blocs: List[Tuple[str, ...]] = []
    seen: Set[str] = set()
    for voter in sorted(adjacency):
        if voter in seen:
            continue
        component: Set[str] = set()
        frontier = [voter]
        while frontier:
            current = frontier.pop()
            if current in component:
                continue
            component.add(current)
            frontier.extend(adjacency[current] - component)
        seen.update(component)
        blocs.append(tuple(sorted(component)))
    blocs.sort()

    cast = len(ballots)
    critical = tuple(bloc for bloc in blocs
                     if len(bloc) >= CRITICAL_BLOC_SHARE * cast)
    return CoordinationReport(
        round_index=round_index,
        tau_threshold=tau_threshold,
        jaccard_threshold=jaccard_threshold,
        k_top=k_top,
        ballots_cast=cast,
        pairs=tuple(flagged),
        blocs=tuple(blocs),
        critical_blocs=critical,
    )


# ---------------------------------------------------------------------------
# Review decisions (pure)
# ---------------------------------------------------------------------------

ALERT_KINDS = frozenset({"freeze", "divergence", "tier3_review"})


class ReviewDecision(Enum):
    FALSE_POSITIVE = "FALSE_POSITIVE"
    RESUME_WITH_AMENDMENT = "RESUME_WITH_AMENDMENT"
    TASK_REASSIGN = "TASK_REASSIGN"
    TERMINATE_MISSION = "TERMINATE_MISSION"
    APPROVE = "APPROVE"
    REJECT = "REJECT"


@dataclass(frozen=True)
class ReviewAlert:
    """Evidence bundle handed to a human reviewer.

    ``confidence`` is the anomaly-confidence score and ``quality`` the
    assessed output quality, both in [0, 1]. ``critical`` marks alerts
    that count toward mission termination.
    """

    kind: str
    confidence: float
    quality: float
    mission_id: str = ""
    node_id: str = ""
    critical: bool = False
    tick: int = 0


def confidence_from_deviation(z_score: float) -> float:
    """Map a guardian deviation score to anomaly confidence, saturating
    at four sigmas."""
    if z_score < 0:
        raise MalformedAlert("deviation score cannot be negative")
    return min(1.0, z_score / CONFIDENCE_SATURATION_SIGMA)


def hitl_decide(alert: ReviewAlert, prior_critical_alerts: int = 0) -> ReviewDecision:
    """Deterministic review policy.

    Tier-3 reviews approve iff quality clears the bar. Otherwise: a
    mission that has already logged ``CRITICAL_ALERT_LIMIT`` critical
    alerts terminates on the next one; low confidence is dismissed as a
    false positive; high confidence with acceptable quality patches and
    resumes from the last verified checkpoint; high confidence with poor
    quality reassigns the task. Pure: counting is the caller's job.
    """
    if alert.kind not in ALERT_KINDS:
        raise MalformedAlert(f"unknown alert kind {alert.kind!r}")
    if not 0.0 <= alert.confidence <= 1.0:
        raise MalformedAlert("anomaly confidence outside [0, 1]")
    if not 0.0 <= alert.quality <= 1.0:
        raise MalformedAlert("output quality outside [0, 1]")
    if prior_critical_alerts < 0:
        raise MalformedAlert("prior critical-alert count cannot be negative")

    if alert.kind == "tier3_review":
        if alert.quality >= QUALITY_THRESHOLD:
            return ReviewDecision.APPROVE
        return ReviewDecision.REJECT
    if alert.critical and prior_critical_alerts >= CRITICAL_ALERT_LIMIT:
        return ReviewDecision.TERMINATE_MISSION
    if alert.confidence <= CONFIDENCE_THRESHOLD:
        return ReviewDecision.FALSE_POSITIVE
    if alert.quality >= QUALITY_THRESHOLD:
        return ReviewDecision.RESUME_WITH_AMENDMENT
    return ReviewDecision.TASK_REASSIGN


# ---------------------------------------------------------------------------
# Adjudicator pool
# ---------------------------------------------------------------------------

@dataclass
class Adjudicator:
    adjudicator_id: str
    principal: str
    stake: int = ADJUDICATOR_STAKE
    agent_id: str = ""          # optional registry identity (MONITOR type)
    flagged: bool = False
    banned: bool = False


# Override actions, their rotation category (None = not rotation-limited),
# and whether they bind a specific mission.
_ACTION_TABLE: Dict[str, Optional[str]] = {
    "UNFREEZE": "freeze",
    "RESOLVE_REVIEW": "attestation",
    "RELEASE_OUTPUT": None,
    "VETO_OUTPUT": None,
    "ABORT_MISSION": None,
    "EXIT_DEGRADED": None,
    "CLEAR_EMERGENCY_STOP": None,
    "SANCTION_AGENT": None,
    "BAN_AGENT": None,
    "AMEND_PARAMETER": None,
}


class AdjudicatorPool:
    """Registered human adjudicators plus the rules that keep any one of
    them from acting alone: quorum floor, conflict screening, rotation
    of sole approvers, co-signed emergency clears, and impeachment."""

    def __init__(
        self,
        members: Iterable[Adjudicator],
        quorum: int = RECOMMENDED_QUORUM,
        fault_tolerance: int = QUORUM_FAULT_TOLERANCE,
        senior: str = "",
        registry: Optional[Ledger] = None,
        log: Optional[EventLog] = None,
    ) -> None:
        self.members: Dict[str, Adjudicator] = {}
        for member in members:
            if member.adjudicator_id in self.members:
                raise ValueError(f"duplicate adjudicator {member.adjudicator_id}")
            self.members[member.adjudicator_id] = member
        self.fault_tolerance = fault_tolerance
        self.quorum = 0
        self.set_quorum(quorum)
        self.senior = senior or (next(iter(self.members)) if self.members else "")
        self.registry = registry
        self.log = log
        # principal -> producer agent ids declared conflicted with it
        self.conflicts: Dict[str, Set[str]] = {}
        # (mission_id, category) -> (last sole approver, streak length)
        self._rotation: Dict[Tuple[str, str], Tuple[str, int]] = {}
        # adjudicator -> [(tick, action, target)]
        self.action_history: Dict[str, List[Tuple[int, str, str]]] = {}
        # target -> supporting votes collected so far
        self.pending_impeachments: Dict[str, Set[str]] = {}
        # mission -> critical review alerts recorded
        self.critical_alerts: Dict[str, int] = {}
        # (tick, adjudicator, action) rows awaiting post-mission audit
        self.audit_queue: List[Tuple[int, str, str]] = []

    # -- membership and quorum -------------------------------------------

    @property
    def quorum_floor(self) -> int:
        return 2 * self.fault_tolerance + 1

    def set_quorum(self, quorum: int, tick: int = 0) -> None:
        """Quorum can never drop below 2f + 1."""
        if quorum < self.quorum_floor:
            raise QuorumNotMet(
                f"quorum {quorum} below floor {self.quorum_floor} "
                f"for fault tolerance {self.fault_tolerance}")
        self.quorum = quorum

    def active_members(self) -> List[Adjudicator]:
        return [m for m in self.members.values() if not m.banned]

    def register_conflict(self, principal: str, producer_agent: str) -> None:
        self.conflicts.setdefault(principal, set()).add(producer_agent)

    def _member(self, adjudicator_id: str) -> Adjudicator:
        member = self.members.get(adjudicator_id)
        if member is None:
            raise Unauthorized(f"unknown adjudicator {adjudicator_id}")
        if member.banned:
            raise Unauthorized(f"adjudicator {adjudicator_id} is banned")
        if self.registry is not None and member.agent_id:
            record = self.registry.agents.get(member.agent_id)
            if record is None or record.banned:
                raise Unauthorized(
                    f"adjudicator {adjudicator_id} has no active registry identity")
            if record.agent_type is not AgentType.MONITOR:
                raise Unauthorized(
                    f"adjudicator {adjudicator_id} is registered as "
                    f"{record.agent_type.name}, not MONITOR")
        return member

    def is_conflicted(self, adjudicator_id: str,
                      participants: Iterable[str]) -> bool:
        """True when the adjudicator's principal is tied to any
        participating producer, by declaration or by shared principal."""
        member = self.members.get(adjudicator_id)
        if member is None:
            return False
        declared = self.conflicts.get(member.principal, set())
        for agent_id in participants:
            if agent_id in declared:
                return True
            if self.registry is not None:
                record = self.registry.agents.get(agent_id)
                if record is not None and record.human_principal == member.principal:
                    return True
        return False

    def _clean_member_count(self, participants: Sequence[str]) -> int:
        return sum(
            1 for m in self.active_members()
            if not self.is_conflicted(m.adjudicator_id, participants)
        )

    # -- review alerts -----------------------------------------------------

    def review_alert(self, alert: ReviewAlert) -> ReviewDecision:
        """Decide an alert, tracking critical repeats per mission."""
        prior = self.critical_alerts.get(alert.mission_id, 0)
        decision = hitl_decide(alert, prior_critical_alerts=prior)
        if alert.critical:
            self.critical_alerts[alert.mission_id] = prior + 1
        return decision

    # -- override dispatch --------------------------------------------------

    def override(
        self,
        action_type: str,
        target: str,
        adjudicator: str,
        justification: str,
        mission=None,
        guardian=None,
        params=None,
        decision=None,
        value: Optional[float] = None,
        cosigners: Sequence[str] = (),
        participants: Optional[Sequence[str]] = None,
        tick: int = 0,
    ):
        """Apply a binding oversight action and log exactly one audit event.

        ``target`` is the node, agent, or parameter the action touches.
        Mission-scoped actions take the mission (and the guardian where
        the action reaches it); amendments take the parameter set.
        When fewer than half the quorum is clean for the mission, only
        the senior adjudicator may proceed, and the action is logged as
        a unilateral override that queues a post-mission audit.
        """
        if action_type not in _ACTION_TABLE:
            raise ValueError(f"unknown override action {action_type}")
        member = self._member(adjudicator)
        if participants is None:
            participants = tuple(mission.assignment.values()) if mission is not None else ()
        if self.is_conflicted(adjudicator, participants):
            raise ConflictOfInterest(
                f"adjudicator {adjudicator} is conflicted for this mission")

        category = _ACTION_TABLE[action_type]
        mission_id = getattr(mission, "mission_id", "") if mission is not None else ""
        rotation_key = (mission_id, category) if category else None
        if rotation_key is not None and not cosigners:
            last, streak = self._rotation.get(rotation_key, ("", 0))
            if last == adjudicator and streak >= ROTATION_SOLE_APPROVAL_LIMIT:
                raise RotationLimit(
                    f"adjudicator {adjudicator} was sole approver for {streak} "
                    f"consecutive {category} decisions on {mission_id or 'this mission'}")

        clean = self._clean_member_count(participants)
        unilateral = clean < math.ceil(self.quorum / 2)
        if unilateral and adjudicator != self.senior:
            raise QuorumNotMet(
                f"only {clean} clean adjudicators available "
                f"(need {math.ceil(self.quorum / 2)}); "
                f"senior adjudicator must act unilaterally")

        if action_type == "CLEAR_EMERGENCY_STOP":
            valid = []
            for signer in cosigners:
                if signer == adjudicator:
                    continue
                cosigning = self._member(signer)
                if self.is_conflicted(cosigning.adjudicator_id, participants):
                    continue
                valid.append(signer)
            if len(valid) < CLEAR_STOP_COSIGNERS:
                raise QuorumNotMet(
                    f"clearing an emergency stop needs {CLEAR_STOP_COSIGNERS} "
                    f"clean co-signers, got {len(valid)}")

        effect = self._dispatch(action_type, target, adjudicator, justification,
                                mission, guardian, params, decision, value, tick)

        if rotation_key is not None:
            if cosigners:
                self._rotation.pop(rotation_key, None)
            else:
                last, streak = self._rotation.get(rotation_key, ("", 0))
                self._rotation[rotation_key] = (
                    adjudicator, streak + 1 if last == adjudicator else 1)
        self.action_history.setdefault(adjudicator, []).append(
            (tick, action_type, target))

        payload = {
            "action": action_type,
            "target": target,
            "adjudicator": adjudicator,
            "justification_digest": hashlib.sha256(
                justification.encode("utf-8")).hexdigest(),
            "cosigners": list(cosigners),
        }
        if unilateral:
            self.audit_queue.append((tick, adjudicator, action_type))
            payload["post_mission_audit"] = True
            self._emit(EventType.UNILATERAL_OVERRIDE, payload, mission_id, tick)
        else:
            self._emit(EventType.OVERRIDE_ACTION, payload, mission_id, tick)
        return effect

    def _dispatch(self, action_type, target, adjudicator, justification,
                  mission, guardian, params, decision, value, tick):
        if action_type == "UNFREEZE":
            from .execution import FreezeDecision
            chosen = decision if decision is not None else FreezeDecision.FALSE_POSITIVE
            return mission.resolve_freeze(target, chosen, tick=tick,
                                          adjudicator=adjudicator)
        if action_type == "RESOLVE_REVIEW":
            return mission.resolve_review(target, approve=bool(decision),
                                          adjudicator=adjudicator, tick=tick)
        if action_type == "RELEASE_OUTPUT":
            return mission.release_output(adjudicator, tick=tick)
        if action_type == "VETO_OUTPUT":
            return mission.veto_output(adjudicator, tick=tick)
        if action_type == "ABORT_MISSION":
            mission.abort(justification, tick=tick)
            return mission.state
        if action_type == "EXIT_DEGRADED":
            mission.exit_degraded(tick, authorized_by=adjudicator)
            return mission.state
        if action_type == "CLEAR_EMERGENCY_STOP":
            return guardian.clear_emergency_stop(target, tick=tick)
        if action_type == "SANCTION_AGENT":
            if self.registry is None:
                raise ValueError("sanctions need a wired registry")
            delta = int(value) if value is not None else 0
            return self.registry.update_reputation(
                target, delta, rationale=justification,
                caller="adjudication", tick=tick)
        if action_type == "BAN_AGENT":
            if self.registry is None:
                raise ValueError("bans need a wired registry")
            self.registry.ban_agent(target, justification, tick=tick)
            return True
        if action_type == "AMEND_PARAMETER":
            if params is None:
                raise ValueError("amendments need the parameter set")
            if not hasattr(params, target):
                raise ValueError(f"unknown constitutional parameter {target}")
            if value is None:
                raise ValueError("amendments need a new value")
            old = getattr(params, target)
            new = type(old)(value)
            return Amendment(
                parameter=target, old_value=old, new_value=new,
                weakening=amendment_weakens(target, old, new),
                params=replace(params, **{target: new}),
            )
        raise ValueError(f"unknown override action {action_type}")

    # -- impeachment --------------------------------------------------------

    def impeach(self, initiator: str, target: str,
                votes: Iterable[str], tick: int = 0) -> str:
        """Supermajority revocation vote. Returns "impeached" or "pending"."""
        if initiator == target:
            raise SelfVote("initiator cannot move their own impeachment")
        self._member_exists(initiator)
        target_member = self._member_exists(target)
        supporting = set(votes)
        if target in supporting:
            raise SelfVote("target cannot vote on their own impeachment")
        for voter in supporting:
            self._member_exists(voter)

        collected = self.pending_impeachments.get(target, set()) | supporting
        pool_size = len(self.active_members())
        threshold = math.ceil(
            IMPEACHMENT_NUMERATOR * pool_size / IMPEACHMENT_DENOMINATOR)
        if len(collected) < threshold:
            self.pending_impeachments[target] = collected
            return "pending"

        forfeited = target_member.stake
        target_member.stake = 0
        target_member.banned = True
        self.pending_impeachments.pop(target, None)
        if self.registry is not None and target_member.agent_id:
            self.registry.ban_agent(
                target_member.agent_id, f"impeached: {initiator}", tick=tick)
        self._emit(EventType.IMPEACHMENT_RESOLVED, {
            "target": target,
            "initiator": initiator,
            "votes": len(collected),
            "threshold": threshold,
            "forfeited_stake": forfeited,
        }, "", tick)
        return "impeached"

    def _member_exists(self, adjudicator_id: str) -> Adjudicator:
        member = self.members.get(adjudicator_id)
        if member is None or member.banned:
            raise Unauthorized(f"unknown adjudicator {adjudicator_id}")
        return member

    def _emit(self, event_type: EventType, payload: dict,
              mission_id: str, tick: int) -> None:
        if self.log is not None:
            self.log.append(event_type, emitter="adjudication",
                            payload=payload, mission_id=mission_id or None,
                            tick=tick)


def amendment_weakens(parameter: str, old_value, new_value) -> bool:
    """Whether a parameter change loosens a guard."""
    if parameter in _WEAKER_WHEN_RAISED:
        return new_value > old_value
    if parameter in _WEAKER_WHEN_LOWERED:
        return new_value < old_value
    return False


@dataclass(frozen=True)
class Amendment:
    """Applied constitutional change; the parameter set is immutable, so
    the amended copy rides along as ``params``."""

    parameter: str
    old_value: object
    new_value: object
    weakening: bool
    params: object


# ---------------------------------------------------------------------------
# Watchdog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WatchdogParams:
    max_approval_rate: float = MAX_APPROVAL_RATE
    max_consecutive_approvals: int = MAX_CONSECUTIVE_APPROVALS
    param_weakening_limit: int = PARAM_WEAKENING_LIMIT
    window_ticks: int = WATCHDOG_WINDOW_TICKS
    rate_sample_floor: int = APPROVAL_RATE_SAMPLE_FLOOR
    max_freeze_ticks: int = WATCHDOG_MAX_FREEZE_TICKS


class AdjudicatorWatchdog:
    """Autonomous circuit breaker over adjudicator behavior.

    Three anomaly rules per adjudicator: approval rate above the cap
    inside the rolling window (once enough actions accumulated), a run
    of consecutive approvals past the cap, or more than the allowed
    guard-weakening amendments in the window. A member's second anomaly
    freezes the whole oversight system; the freeze lifts only when every
    non-flagged active member signs, and a freeze left standing past the
    deadline drops governance into degraded mode (no new missions,
    executing nodes finish their current node only).
    """

    def __init__(self, pool: AdjudicatorPool,
                 params: Optional[WatchdogParams] = None,
                 log: Optional[EventLog] = None) -> None:
        self.pool = pool
        self.params = params or WatchdogParams()
        self.log = log if log is not None else pool.log
        # adjudicator -> [(tick, approved, weakening)]
        self.actions: Dict[str, List[Tuple[int, bool, bool]]] = {}
        self.consecutive_approvals: Dict[str, int] = {}
        self.anomalies: Dict[str, List[Tuple[int, str]]] = {}
        self.system_frozen = False
        self.frozen_at: Optional[int] = None

    def record(self, adjudicator: str, action: str, approved: bool,
               tick: int = 0, weakening: bool = False) -> Optional[str]:
        """Observe one decision; returns the anomaly rule tripped, if any."""
        member = self.pool.members.get(adjudicator)
        if member is None:
            raise Unauthorized(f"unknown adjudicator {adjudicator}")

        window = self.actions.setdefault(adjudicator, [])
        window.append((tick, approved, weakening))
        horizon = tick - self.params.window_ticks
        while window and window[0][0] <= horizon:
            window.pop(0)

        if approved:
            streak = self.consecutive_approvals.get(adjudicator, 0) + 1
        else:
            streak = 0
        self.consecutive_approvals[adjudicator] = streak

        rule: Optional[str] = None
        if streak > self.params.max_consecutive_approvals:
            rule = "consecutive_approvals"
        elif sum(1 for _, _, weak in window if weak) > self.params.param_weakening_limit:
            rule = "parameter_weakening"
        elif len(window) > self.params.rate_sample_floor:
            rate = sum(1 for _, ok, _ in window if ok) / len(window)
            if rate > self.params.max_approval_rate:
                rule = "approval_rate"
        if rule is None:
            return None

        history = self.anomalies.setdefault(adjudicator, [])
        history.append((tick, rule))
        member.flagged = True
        self._emit(EventType.WATCHDOG_ALERT, {
            "adjudicator": adjudicator,
            "rule": rule,
            "anomaly_count": len(history),
        }, tick)
        if len(history) >= 2 and not self.system_frozen:
            self.system_frozen = True
            self.frozen_at = tick
            self._emit(EventType.WATCHDOG_FREEZE, {
                "adjudicator": adjudicator,
                "rule": rule,
            }, tick)
        return rule

    def lift_freeze(self, signers: Iterable[str], tick: int = 0) -> bool:
        """Unanimous non-flagged consent lifts the freeze; any flagged or
        banned signature voids the attempt. Returns whether it lifted."""
        if not self.system_frozen:
            return False
        required = {m.adjudicator_id for m in self.pool.active_members()
                    if not m.flagged}
        signatures = set(signers)
        for signer in signatures:
            member = self.pool.members.get(signer)
            if member is None or member.banned or member.flagged:
                return False
        if not required or not required <= signatures:
            return False
        self.system_frozen = False
        self.frozen_at = None
        self._emit(EventType.UNFREEZE_APPROVED, {
            "scope": "watchdog",
            "signers": sorted(signatures),
        }, tick)
        return True

    def in_degraded_governance(self, tick: int) -> bool:
        """True once a freeze has outlived its maximum duration."""
        return (self.system_frozen and self.frozen_at is not None
                and tick - self.frozen_at > self.params.max_freeze_ticks)

    def _emit(self, event_type: EventType, payload: dict, tick: int) -> None:
        if self.log is not None:
            self.log.append(event_type, emitter="adjudication",
                            payload=payload, tick=tick)

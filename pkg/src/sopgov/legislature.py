"""Legislative sessions: proposal, bidding, review, codification, approval.

A session is a single-threaded state machine driven by seven message
types in phase order. Agents legislate here; nothing in this module
executes work. The outputs are an approved task DAG, a winning-bid
assignment, a compiled contract specification with a constitutional
proof, and a dual co-signed approval record.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .ledger import AgentType, EventLog, EventType, Ledger


class LegislatureError(Exception):
    pass


class IllegalMessageForState(LegislatureError):
    pass


class ValidityFailure(LegislatureError):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class TimeoutExpired(LegislatureError):
    pass


class ReProposalBudgetExhausted(LegislatureError):
    pass


class EmptyBallotSet(LegislatureError):
    pass


class InconsistentCandidateSets(LegislatureError):
    pass


class InvalidDistribution(LegislatureError):
    pass


# ---------------------------------------------------------------------------
# Constitutional parameters


@dataclass(frozen=True)
class ConstitutionalParams:
    deviation_threshold_sigma: float = 2.0
    max_tool_invocations: int = 40
    max_message_volume: int = 120
    escalation_freeze_count: int = 3
    base_escalation_window_ms: int = 1_200_000
    mission_budget_cap: int = 1_000_000
    min_fairness_score: int = 600
    reputation_floor: int = 100
    min_node_timeout_ms: int = 1_000
    max_node_timeout_ms: int = 3_600_000
    min_human_review_timeout_ms: int = 300_000

    def to_document(self) -> dict:
        return {
            "deviationThresholdSigma": self.deviation_threshold_sigma,
            "maxToolInvocations": self.max_tool_invocations,
            "maxMessageVolume": self.max_message_volume,
            "escalationFreezeCount": self.escalation_freeze_count,
            "baseEscalationWindowMs": self.base_escalation_window_ms,
            "missionBudgetCap": self.mission_budget_cap,
            "minFairnessScore": self.min_fairness_score,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "ConstitutionalParams":
        return cls(
            deviation_threshold_sigma=doc["deviationThresholdSigma"],
            max_tool_invocations=doc["maxToolInvocations"],
            max_message_volume=doc["maxMessageVolume"],
            escalation_freeze_count=doc["escalationFreezeCount"],
            base_escalation_window_ms=doc["baseEscalationWindowMs"],
            mission_budget_cap=doc["missionBudgetCap"],
            min_fairness_score=doc["minFairnessScore"],
        )


DEFAULT_STAKE_SCHEDULE: Dict[str, int] = {"LOW": 150, "MEDIUM": 500, "HIGH": 2_000}

PROPOSAL_TIMEOUT_TICKS = 600_000
BIDDING_TIMEOUT_TICKS = 900_000
APPROVAL_TIMEOUT_TICKS = 300_000

MAX_RE_PROPOSALS = 2
MAX_CODIFICATION_RETRIES = 2


# ---------------------------------------------------------------------------
# Task DAG


@dataclass
class DagNode:
    node_id: str
    label: str
    service_id: str
    input_schema_hash: str
    output_schema_hash: str
    pop_tier: int
    token_budget: int
    timeout_ms: int
    risk_tier: str
    redundancy_factor: int = 1
    consensus_threshold: int = 1
    output_kind: str = "label"  # label | set | numeric
    producer_agent_did: str = ""

    def to_document(self) -> dict:
        return {
            "nodeId": self.node_id,
            "label": self.label,
            "serviceId": self.service_id,
            "producerAgentDid": self.producer_agent_did,
            "inputSchemaHash": self.input_schema_hash,
            "outputSchemaHash": self.output_schema_hash,
            "popTier": self.pop_tier,
            "redundancyFactor": self.redundancy_factor,
            "consensusThreshold": self.consensus_threshold,
            "tokenBudget": self.token_budget,
            "timeoutMs": self.timeout_ms,
            "riskTier": self.risk_tier,
            "outputKind": self.output_kind,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "DagNode":
        return cls(
            node_id=doc["nodeId"],
            label=doc["label"],
            service_id=doc["serviceId"],
            producer_agent_did=doc.get("producerAgentDid", ""),
            input_schema_hash=doc["inputSchemaHash"],
            output_schema_hash=doc["outputSchemaHash"],
            pop_tier=doc["popTier"],
            redundancy_factor=doc["redundancyFactor"],
            consensus_threshold=doc["consensusThreshold"],
            token_budget=doc["tokenBudget"],
            timeout_ms=doc["timeoutMs"],
            risk_tier=doc["riskTier"],
            output_kind=doc.get("outputKind", "label"),
        )


@dataclass
class DagEdge:
    from_node: str
    to_node: str
    data_flow_schema: str = ""

    def to_document(self) -> dict:
        return {
            "from": self.from_node,
            "to": self.to_node,
            "dataFlowSchema": self.data_flow_schema,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "DagEdge":
        return cls(doc["from"], doc["to"], doc.get("dataFlowSchema", ""))


@dataclass
class DagSpec:
    mission_id: str
    epoch: int
    nodes: List[DagNode]
    edges: List[DagEdge]
    budget_total: int
    legislative_session_id: str = ""
    service_contracts: List[str] = field(default_factory=list)
    gate_predicates: List[dict] = field(default_factory=list)
    stake_schedule: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_STAKE_SCHEDULE))
    child_specs: Dict[str, "DagSpec"] = field(default_factory=dict)

    def node(self, node_id: str) -> DagNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def node_ids(self) -> List[str]:
        return [n.node_id for n in self.nodes]

    def predecessors(self, node_id: str) -> List[str]:
        return [e.from_node for e in self.edges if e.to_node == node_id]

    def successors(self, node_id: str) -> List[str]:
        return [e.to_node for e in self.edges if e.from_node == node_id]

    def topological_order(self) -> Optional[List[str]]:
        """Kahn's algorithm; None when the edge set has a cycle."""
        ids = self.node_ids()
        indegree = {n: 0 for n in ids}
        for edge in self.edges:
            if edge.to_node in indegree:
                indegree[edge.to_node] += 1
        frontier = sorted(n for n, d in indegree.items() if d == 0)
        order: List[str] = []
        while frontier:
            current = frontier.pop(0)
            order.append(current)
            for succ in self.successors(current):
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    frontier.append(succ)
            frontier.sort()
        return order if len(order) == len(ids) else None

    def structural_errors(self) -> List[str]:
        """Violations of the DAG shape rules, all of them."""
        errors: List[str] = []
        ids = self.node_ids()
        if not ids:
            errors.append("dag has no nodes")
            return errors
        if len(set(ids)) != len(ids):
            errors.append("duplicate node ids")
        known = set(ids)
        for edge in self.edges:
            if edge.from_node not in known or edge.to_node not in known:
                errors.append(
                    f"edge {edge.from_node}->{edge.to_node} references unknown node"
                )
        if self.topological_order() is None:
            errors.append("acyclicity violated: topological sort failed")
        targets = {e.to_node for e in self.edges}
        sources = {e.from_node for e in self.edges}
        if not (known - targets):
            errors.append("no root node")
        if not (known - sources):
            errors.append("no terminal node")
        for node in self.nodes:
            if node.token_budget <= 0:
                errors.append(f"node {node.node_id} budget must be positive")
        if sum(n.token_budget for n in self.nodes) > self.budget_total:
            errors.append("node budgets exceed mission budget_total")
        for node_id, child in self.child_specs.items():
            if node_id not in known:
                errors.append(f"child spec attached to unknown node {node_id}")
                continue
            parent_budget = self.node(node_id).token_budget
            if child.budget_total > parent_budget:
                errors.append(
                    f"child spec of {node_id} exceeds parent budget "
                    f"({child.budget_total} > {parent_budget})"
                )
            errors.extend(f"{node_id}: {e}" for e in child.structural_errors())
        return errors

    def digest(self) -> str:
        blob = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_document(self) -> dict:
        return {
            "missionId": self.mission_id,
            "epoch": self.epoch,
            "legislativeSessionId": self.legislative_session_id,
            "constitutionalParams": None,  # filled by export_mission_document
            "dagNodes": [n.to_document() for n in self.nodes],
            "dagEdges": [e.to_document() for e in self.edges],
            "serviceContracts": list(self.service_contracts),
            "gatePredicates": list(self.gate_predicates),
            "stakeSchedule": [
                {"riskTier": tier, "minStake": stake}
                for tier, stake in sorted(self.stake_schedule.items())
            ],
            "budgetTotal": self.budget_total,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "DagSpec":
        return cls(
            mission_id=doc["missionId"],
            epoch=doc["epoch"],
            legislative_session_id=doc.get("legislativeSessionId", ""),
            nodes=[DagNode.from_document(d) for d in doc["dagNodes"]],
            edges=[DagEdge.from_document(d) for d in doc["dagEdges"]],
            budget_total=doc["budgetTotal"],
            service_contracts=list(doc.get("serviceContracts", [])),
            gate_predicates=list(doc.get("gatePredicates", [])),
            stake_schedule={
                row["riskTier"]: row["minStake"]
                for row in doc.get("stakeSchedule", [])
            }
            or dict(DEFAULT_STAKE_SCHEDULE),
        )


def export_mission_document(spec: DagSpec, params: ConstitutionalParams) -> str:
    doc = spec.to_document()
    doc["constitutionalParams"] = params.to_document()
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def import_mission_document(text: str) -> Tuple[DagSpec, ConstitutionalParams]:
    doc = json.loads(text)
    spec = DagSpec.from_document(doc)
    params = ConstitutionalParams.from_document(doc["constitutionalParams"])
    return spec, params


# ---------------------------------------------------------------------------
# Fairness and monopolization


def fairness_score(shares: Sequence[float], p: int) -> float:
    """Market-balance score on [0, 1000] from producer value shares.

    1000 means perfectly even assignment, 0 a monopoly; the score is
    the complement of the producer-count-normalized concentration
    index.
    """
    if p < 1:
        raise InvalidDistribution("producer count must be >= 1")
    if not shares or any(s < -1e-12 for s in shares):
        raise InvalidDistribution("shares must be non-negative and non-empty")
    if len(shares) > p:
        raise InvalidDistribution("more shares than producers")
    total = sum(shares)
    if abs(total - 1.0) > 1e-6:
        raise InvalidDistribution(f"shares sum to {total}, not 1")
    if p == 1:
        return 0.0
    hhi = sum(s * s for s in shares)
    floor = 1.0 / p
    score = 1000.0 * (1.0 - (hhi - floor) / (1.0 - floor))
    return max(0.0, min(1000.0, score))


def max_dominant_share(p: int, min_fairness: float) -> float:
    """Largest single-producer share keeping fairness at or above the floor.

    Remaining producers are assumed to split the rest evenly, which is
    the most favorable arrangement; solved by bisection to 1e-4.
    """
    if p < 2:
        raise InvalidDistribution("needs at least two producers")

    def fairness_at(s: float) -> float:
        rest = (1.0 - s) / (p - 1)
        return fairness_score([s] + [rest] * (p - 1), p)

    lo, hi = 1.0 / p, 1.0
    if fairness_at(hi) >= min_fairness:
        return hi
    while hi - lo > 1e-4:
        mid = (lo + hi) / 2.0
        if fairness_at(mid) >= min_fairness:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Ballot aggregation


@dataclass(frozen=True)
class PreferenceRanking:
    voter: str
    ranking: Tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ranking)) != len(self.ranking):
            raise InvalidDistribution(f"ranking of {self.voter} repeats a candidate")


def copeland_winner(ballots: Sequence[PreferenceRanking]) -> str:
    """Pairwise-majority winner with margin-based tie-breaking.

    Copeland score is pairwise wins minus losses. Ties break by the
    smallest worst pairwise defeat margin, then by lowest candidate id
    so replays are deterministic.
    """
    if not ballots:
        raise EmptyBallotSet("no ballots cast")
    candidates = sorted(ballots[0].ranking)
    for ballot in ballots:
        if sorted(ballot.ranking) != candidates:
            raise InconsistentCandidateSets(
                f"ballot of {ballot.voter} ranks a different candidate set"
            )
    if len(candidates) == 1:
        return candidates[0]

    prefer: Dict[Tuple[str, str], int] = {}
    for ballot in ballots:
        position = {c: i for i, c in enumerate(ballot.ranking)}
        for i, a in enumerate(candidates):
            for b in candidates[i + 1 :]:
                if position[a] < position[b]:
                    prefer[a, b] = prefer.get((a, b), 0) + 1
                else:
                    prefer[b, a] = prefer.get((b, a), 0) + 1

    def copeland(c: str) -> int:
        score = 0
        for other in candidates:
            if other == c:
                continue
            for_c = prefer.get((c, other), 0)
            against = prefer.get((other, c), 0)
            if for_c > against:
                score += 1
            elif for_c < against:
                score -= 1
        return score

    def worst_defeat(c: str) -> int:
        return max(
            prefer.get((other, c), 0) - prefer.get((c, other), 0)
            for other in candidates
            if other != c
        )

    return min(candidates, key=lambda c: (-copeland(c), worst_defeat(c), c))


# ---------------------------------------------------------------------------
# Constitutional validation


@dataclass(frozen=True)
class ValidationResult:
    errors: Tuple[str, ...]
    proof: Optional[str]

    @property
    def ok(self) -> bool:
        return not self.errors


def constitutional_validate(
    spec: DagSpec,
    params: ConstitutionalParams,
    registry: Optional[Ledger] = None,
    assignment_shares: Optional[Sequence[float]] = None,
    producer_count: Optional[int] = None,
) -> ValidationResult:
    """Evaluate every constitutional check and return the full error list.

    Content failures never raise; the caller gets all violations at
    once. A proof digest is issued only on a clean pass.
    """
    errors: List[str] = []

    def check_range(name: str, value: float, lo: float, hi: float) -> None:
        if not lo <= value <= hi:
            errors.append(f"{name}={value} outside range [{lo:g}, {hi:g}]")

    check_range("deviationThresholdSigma", params.deviation_threshold_sigma, 1, 5)
    check_range("maxToolInvocations", params.max_tool_invocations, 5, 200)
    check_range("maxMessageVolume", params.max_message_volume, 10, 500)
    check_range("escalationFreezeCount", params.escalation_freeze_count, 2, 10)
    check_range("reputationFloor", params.reputation_floor, 0, 1000)

    if spec.budget_total > params.mission_budget_cap:
        errors.append(
            f"budget_total {spec.budget_total} exceeds cap {params.mission_budget_cap}"
        )
    errors.extend(spec.structural_errors())

    for node in spec.nodes:
        nid = node.node_id
        if node.pop_tier not in (1, 2, 3):
            errors.append(f"node {nid} popTier {node.pop_tier} not in {{1,2,3}}")
            continue
        if not params.min_node_timeout_ms <= node.timeout_ms <= params.max_node_timeout_ms:
            errors.append(
                f"node {nid} timeout {node.timeout_ms} outside "
                f"[{params.min_node_timeout_ms}, {params.max_node_timeout_ms}]"
            )
        if node.pop_tier == 2:
            r, t = node.redundancy_factor, node.consensus_threshold
            if not 2 <= r <= 5:
                errors.append(f"node {nid} redundancy {r} outside [2, 5]")
            elif not math.ceil(r / 2) <= t <= r:
                errors.append(
                    f"node {nid} consensus threshold {t} outside "
                    f"[ceil({r}/2), {r}]"
                )
        if node.pop_tier == 3 and node.timeout_ms < params.min_human_review_timeout_ms:
            errors.append(
                f"node {nid} tier-3 timeout {node.timeout_ms} below "
                f"human-review minimum {params.min_human_review_timeout_ms}"
            )
        if node.risk_tier not in spec.stake_schedule:
            errors.append(f"node {nid} risk tier {node.risk_tier!r} has no stake rule")
        if registry is not None:
            service = registry.services.get(node.service_id)
            if service is None:
                errors.append(f"node {nid} service {node.service_id} not registered")
            elif service.deprecated:
                errors.append(f"node {nid} service {node.service_id} deprecated")

    if assignment_shares is not None:
        p = producer_count if producer_count is not None else len(assignment_shares)
        try:
            score = fairness_score(assignment_shares, p)
        except InvalidDistribution as exc:
            errors.append(f"fairness shares invalid: {exc}")
        else:
            if score < params.min_fairness_score:
                errors.append(
                    f"fairness {score:.0f} below floor {params.min_fairness_score}"
                )

    if errors:
        return ValidationResult(tuple(errors), None)
    proof = hashlib.sha256(
        (spec.digest() + json.dumps(params.to_document(), sort_keys=True)).encode()
    ).hexdigest()
    return ValidationResult((), proof)


# ---------------------------------------------------------------------------
# Codification


FORBIDDEN_OPCODES = frozenset({"SELFDESTRUCT", "DELEGATECALL", "CREATE2"})


@dataclass(frozen=True)
class SelectorSpec:
    selector: str
    node_id: Optional[str]
    state_modifying: bool
    access_controlled: bool


@dataclass
class CompiledSpec:
    source_digest: str
    node_ids: Tuple[str, ...]
    edges: Tuple[Tuple[str, str], ...]
    opcode_tags: Tuple[str, ...]
    selectors: Tuple[SelectorSpec, ...]
    param_map: Dict[str, float]


def compile_dag(spec: DagSpec, params: ConstitutionalParams) -> CompiledSpec:
    """Template parameterization of an approved DAG; zero discretion."""
    selectors: List[SelectorSpec] = []
    for node in spec.nodes:
        selectors.append(
            SelectorSpec(f"routeTask_{node.node_id}", node.node_id, True, True)
        )
        selectors.append(
            SelectorSpec(f"submitProof_{node.node_id}", node.node_id, True, True)
        )
    selectors.append(SelectorSpec("finalizeMission", None, True, True))
    selectors.append(SelectorSpec("readMissionState", None, False, False))
    return CompiledSpec(
        source_digest=spec.digest(),
        node_ids=tuple(spec.node_ids()),
        edges=tuple((e.from_node, e.to_node) for e in spec.edges),
        opcode_tags=("SSTORE", "SLOAD", "CALL", "STATICCALL", "LOG1"),
        selectors=tuple(selectors),
        param_map={
            "deviationThresholdSigma": params.deviation_threshold_sigma,
            "maxToolInvocations": params.max_tool_invocations,
            "maxMessageVolume": params.max_message_volume,
        },
    )


@dataclass(frozen=True)
class AuditResult:
    failures: Tuple[str, ...]
    notes: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures


AUDIT_ADVISORY_NOTES = tuple(
    f"M{i}: outside automated audit scope, flagged for manual review"
    for i in (5, 6, 7, 8)
)


def codification_audit(compiled: CompiledSpec, approved: DagSpec) -> AuditResult:
    """Structural conformance of compiled output against the approved DAG.

    Checks M1 (forbidden opcodes), M2 (access control on state-modifying
    selectors), M3 (topology equality), M4 (selector coverage). M5-M8
    are advisory notes only.
    """
    failures: List[str] = []
    bad_opcodes = sorted(set(compiled.opcode_tags) & FORBIDDEN_OPCODES)
    if bad_opcodes:
        failures.append(f"M1: forbidden opcode tags {bad_opcodes}")
    for sel in compiled.selectors:
        if sel.state_modifying and not sel.access_controlled:
            failures.append(f"M2: selector {sel.selector} lacks access control")
    if sorted(compiled.node_ids) != sorted(approved.node_ids()) or sorted(
        compiled.edges
    ) != sorted((e.from_node, e.to_node) for e in approved.edges):
        failures.append("M3: topology diverges from approved specification")
    covered = {sel.node_id for sel in compiled.selectors if sel.node_id}
    missing = sorted(set(approved.node_ids()) - covered)
    if missing:
        failures.append(f"M4: nodes without selectors {missing}")
    return AuditResult(tuple(failures), AUDIT_ADVISORY_NOTES)


# ---------------------------------------------------------------------------
# Session messages (MSG_TYPE_1 .. MSG_TYPE_7)


@dataclass(frozen=True)
class IdentityVerificationRequest:
    MSG_TYPE = 1
    sender: str


@dataclass(frozen=True)
class IdentityAttestation:
    MSG_TYPE = 2
    sender: str
    agent_id: str
    did: str
    signature: str
    reputation: int


@dataclass(frozen=True)
class DagProposal:
    MSG_TYPE = 3
    sender: str
    spec: DagSpec


@dataclass(frozen=True)
class TaskBid:
    MSG_TYPE = 4
    sender: str
    bid_id: str
    node_id: str
    service_id: str
    code_hash: str
    price: int
    stake: int
    accepted_tier: int


@dataclass(frozen=True)
class RegulatoryDecision:
    MSG_TYPE = 5
    sender: str
    approve: bool
    assignment: Mapping[str, str] = field(default_factory=dict)
    flags: Tuple[Tuple[str, str], ...] = ()  # (severity, note)
    re_propose: bool = False


@dataclass(frozen=True)
class CodedContractSpecification:
    MSG_TYPE = 6
    sender: str
    compiled: CompiledSpec


@dataclass(frozen=True)
class LegislativeApproval:
    MSG_TYPE = 7
    sender: str
    legislative_signer: str
    regulatory_signer: str


class SessionState(Enum):
    SESSION_INIT = auto()
    IDENTITY_VERIFICATION = auto()
    PROPOSAL_OPEN = auto()
    BIDDING_OPEN = auto()
    REGULATORY_REVIEW = auto()
    CODIFICATION = auto()
    AWAITING_APPROVAL = auto()
    DEPLOYED = auto()
    FAILED = auto()


# message types legal per state
_LEGAL_MESSAGES: Dict[SessionState, Tuple[int, ...]] = {
    SessionState.SESSION_INIT: (1,),
    SessionState.IDENTITY_VERIFICATION: (2,),
    SessionState.PROPOSAL_OPEN: (3,),
    SessionState.BIDDING_OPEN: (4,),
    SessionState.REGULATORY_REVIEW: (5,),
    SessionState.CODIFICATION: (6,),
    SessionState.AWAITING_APPROVAL: (7,),
    SessionState.DEPLOYED: (),
    SessionState.FAILED: (),
}

_STATE_TIMEOUTS: Dict[SessionState, int] = {
    SessionState.PROPOSAL_OPEN: PROPOSAL_TIMEOUT_TICKS,
    SessionState.BIDDING_OPEN: BIDDING_TIMEOUT_TICKS,
    SessionState.AWAITING_APPROVAL: APPROVAL_TIMEOUT_TICKS,
}


class LegislativeSession:
    """One legislative session for one mission epoch."""

    def __init__(
        self,
        session_id: str,
        mission_id: str,
        epoch: int,
        legislative_agent: str,
        regulatory_agent: str,
        participants: Iterable[str],
        params: Optional[ConstitutionalParams] = None,
        stake_schedule: Optional[Dict[str, int]] = None,
        registry: Optional[Ledger] = None,
        log: Optional[EventLog] = None,
    ) -> None:
        self.session_id = session_id
        self.mission_id = mission_id
        self.epoch = epoch
        self.legislative_agent = legislative_agent
        self.regulatory_agent = regulatory_agent
        self.participants: Set[str] = set(participants)
        self.params = params or ConstitutionalParams()
        self.stake_schedule = dict(stake_schedule or DEFAULT_STAKE_SCHEDULE)
        self.registry = registry
        self.log = log
        self.state = SessionState.SESSION_INIT
        self.transcript: List[object] = []
        self.attested: Set[str] = set()
        self.proposal: Optional[DagSpec] = None
        self.bids: Dict[str, List[TaskBid]] = {}
        self.assignment: Dict[str, str] = {}
        self.compiled: Optional[CompiledSpec] = None
        self.constitutional_proof: Optional[str] = None
        self.approval: Optional[LegislativeApproval] = None
        self.re_proposal_count = 0
        self.codification_retries = 0
        self.deadline: Optional[int] = None
        self.straw_ballots: List[PreferenceRanking] = []
        self.final_ballots: List[PreferenceRanking] = []
        self._emit(EventType.SESSION_INITIATED, {"session_id": session_id}, 0)

    # -- helpers -----------------------------------------------------------

    def _emit(self, event_type: EventType, payload: dict, tick: int) -> None:
        if self.log is not None:
            self.log.append(
                event_type,
                emitter="legislature",
                mission_id=self.mission_id,
                epoch=self.epoch,
                primary_entity=self.session_id,
                tick=tick,
                payload=payload,
            )

    def _enter(self, state: SessionState, tick: int) -> None:
        self.state = state
        timeout = _STATE_TIMEOUTS.get(state)
        self.deadline = tick + timeout if timeout is not None else None

    def record_straw_ranking(self, ranking: PreferenceRanking) -> None:
        if self.state is not SessionState.PROPOSAL_OPEN:
            raise IllegalMessageForState("straw ballots only during proposal phase")
        self.straw_ballots.append(ranking)

    def record_final_ranking(self, ranking: PreferenceRanking) -> None:
        if self.state is not SessionState.REGULATORY_REVIEW:
            raise IllegalMessageForState("final ballots only during review phase")
        self.final_ballots.append(ranking)

    def uncovered_nodes(self) -> List[str]:
        if self.proposal is None:
            return []
        return [n for n in self.proposal.node_ids() if not self.bids.get(n)]

    def close_bidding(self, tick: int) -> SessionState:
        """Move a fully-covered bid book into regulatory review."""
        self._check_deadline(tick)
        if self.state is not SessionState.BIDDING_OPEN:
            raise IllegalMessageForState(f"cannot close bidding in {self.state.name}")
        uncovered = self.uncovered_nodes()
        if uncovered:
            raise ValidityFailure(f"uncovered nodes: {uncovered}")
        self._enter(SessionState.REGULATORY_REVIEW, tick)
        return self.state

    def _check_deadline(self, tick: int) -> None:
        if self.deadline is not None and tick > self.deadline:
            self._enter(SessionState.FAILED, tick)
            raise TimeoutExpired(
                f"session {self.session_id} timed out entering tick {tick}"
            )

    def expire(self, tick: int) -> bool:
        """Fail the session if its current-phase deadline has passed."""
        try:
            self._check_deadline(tick)
        except TimeoutExpired:
            return True
        return False


def advance_session(
    session: LegislativeSession, message: object, tick: int = 0
) -> SessionState:
    """Apply one protocol message to a session.

    Raises on illegal or invalid messages, leaving the transcript
    untouched; timeouts fail the session before the message is
    considered.
    """
    session._check_deadline(tick)
    msg_type = getattr(message, "MSG_TYPE", None)
    if msg_type not in _LEGAL_MESSAGES[session.state]:
        raise IllegalMessageForState(
            f"MSG_TYPE_{msg_type} not legal in {session.state.name}"
        )
    handler = _HANDLERS[msg_type]
    handler(session, message, tick)
    session.transcript.append(message)
    return session.state


def _handle_identity_request(
    session: LegislativeSession, msg: IdentityVerificationRequest, tick: int
) -> None:
    if msg.sender != session.legislative_agent:
        raise ValidityFailure("identity round must be opened by the legislative agent")
    session._enter(SessionState.IDENTITY_VERIFICATION, tick)


def _handle_attestation(
    session: LegislativeSession, msg: IdentityAttestation, tick: int
) -> None:
    if not msg.signature:
        raise ValidityFailure(f"attestation for {msg.agent_id} lacks a signature")
    if not msg.did.startswith("did:"):
        raise ValidityFailure(f"attestation for {msg.agent_id} has a malformed did")
    if msg.agent_id not in session.participants:
        raise ValidityFailure(f"{msg.agent_id} is not a session participant")
    reputation = msg.reputation
    if session.registry is not None and msg.agent_id in session.registry.agents:
        reputation = session.registry.reputation_of(msg.agent_id)
    if reputation < session.params.reputation_floor:
        raise ValidityFailure(
            f"{msg.agent_id} reputation {reputation} below floor "
            f"{session.params.reputation_floor}"
        )
    session.attested.add(msg.agent_id)
    session._emit(
        EventType.IDENTITY_VERIFIED,
        {"agent_id": msg.agent_id, "reputation": reputation},
        tick,
    )
    if session.attested >= session.participants:
        session._enter(SessionState.PROPOSAL_OPEN, tick)


def _handle_proposal(session: LegislativeSession, msg: DagProposal, tick: int) -> None:
    spec = msg.spec
    structural = spec.structural_errors()
    if structural:
        raise ValidityFailure("; ".join(structural))
    if spec.budget_total > session.params.mission_budget_cap:
        raise ValidityFailure(
            f"budget {spec.budget_total} exceeds cap "
            f"{session.params.mission_budget_cap}"
        )
    session.proposal = spec
    spec.legislative_session_id = session.session_id
    session.bids = {}
    session._emit(
        EventType.DAG_PROPOSED,
        {"nodes": spec.node_ids(), "budget": spec.budget_total},
        tick,
    )
    session._enter(SessionState.BIDDING_OPEN, tick)


def _handle_bid(session: LegislativeSession, msg: TaskBid, tick: int) -> None:
    spec = session.proposal
    assert spec is not None
    try:
        node = spec.node(msg.node_id)
    except KeyError:
        raise ValidityFailure(f"bid {msg.bid_id} targets unknown node {msg.node_id}")
    if msg.sender not in session.participants:
        raise ValidityFailure(f"bidder {msg.sender} is not a verified participant")
    if msg.sender not in session.attested:
        raise ValidityFailure(f"bidder {msg.sender} skipped identity verification")
    registry = session.registry
    if registry is not None:
        record = registry.agents.get(msg.sender)
        if record is None or record.agent_type is not AgentType.PRODUCER:
            raise ValidityFailure(f"bidder {msg.sender} is not a registered producer")
        service = registry.services.get(msg.service_id)
        if service is None or service.deprecated:
            raise ValidityFailure(f"service {msg.service_id} unavailable")
        if service.code_hash != msg.code_hash:
            raise ValidityFailure(
                f"bid {msg.bid_id} code hash does not match registered service"
            )
    if msg.service_id != node.service_id:
        raise ValidityFailure(
            f"bid {msg.bid_id} offers service {msg.service_id}, node wants "
            f"{node.service_id}"
        )
    minimum = session.stake_schedule.get(node.risk_tier, 0)
    if msg.stake < minimum:
        raise ValidityFailure(
            f"bid {msg.bid_id} stake {msg.stake} below minimum {minimum} "
            f"for {node.risk_tier}"
        )
    if msg.accepted_tier != node.pop_tier:
        raise ValidityFailure(
            f"bid {msg.bid_id} accepts tier {msg.accepted_tier}, node requires "
            f"{node.pop_tier}"
        )
    if msg.price > node.token_budget:
        raise ValidityFailure(
            f"bid {msg.bid_id} price {msg.price} exceeds node budget "
            f"{node.token_budget}"
        )
    session.bids.setdefault(msg.node_id, []).append(msg)
    session._emit(
        EventType.BID_SUBMITTED,
        {"bid_id": msg.bid_id, "node_id": msg.node_id, "bidder": msg.sender},
        tick,
    )


def _handle_review(
    session: LegislativeSession, msg: RegulatoryDecision, tick: int
) -> None:
    if msg.sender != session.regulatory_agent:
        raise ValidityFailure("regulatory decision must come from the regulator")
    if not msg.approve:
        if msg.re_propose:
            if session.re_proposal_count >= MAX_RE_PROPOSALS:
                session._enter(SessionState.FAILED, tick)
                raise ReProposalBudgetExhausted(
                    f"re-proposal budget ({MAX_RE_PROPOSALS}) exhausted"
                )
            session.re_proposal_count += 1
            session.proposal = None
            session.bids = {}
            session._enter(SessionState.PROPOSAL_OPEN, tick)
            return
        session._enter(SessionState.FAILED, tick)
        return
    spec = session.proposal
    assert spec is not None
    critical = [note for severity, note in msg.flags if severity == "CRITICAL"]
    if critical:
        raise ValidityFailure(f"critical findings block approval: {critical}")
    missing = [n for n in spec.node_ids() if n not in msg.assignment]
    if missing:
        raise ValidityFailure(f"assignment does not cover nodes {missing}")
    for node_id, winner in msg.assignment.items():
        node_bids = session.bids.get(node_id, [])
        if not any(b.sender == winner for b in node_bids):
            raise ValidityFailure(
                f"assigned winner {winner} never bid on node {node_id}"
            )
    score = assignment_fairness(spec, msg.assignment, bidder_count(session.bids))
    if score < session.params.min_fairness_score:
        raise ValidityFailure(
            f"fairness {score:.0f} below floor {session.params.min_fairness_score}"
        )
    session.assignment = dict(msg.assignment)
    for node in spec.nodes:
        winner = session.assignment[node.node_id]
        if session.registry is not None and winner in session.registry.agents:
            node.producer_agent_did = session.registry.agents[winner].did
        else:
            node.producer_agent_did = winner
    session._emit(
        EventType.REGULATORY_SIGNED,
        {"assignment": dict(msg.assignment), "fairness": score},
        tick,
    )
    session._enter(SessionState.CODIFICATION, tick)


def _handle_codification(
    session: LegislativeSession, msg: CodedContractSpecification, tick: int
) -> None:
    spec = session.proposal
    assert spec is not None
    shares = assignment_shares(spec, session.assignment)
    result = constitutional_validate(
        spec,
        session.params,
        registry=session.registry,
        assignment_shares=shares,
        producer_count=bidder_count(session.bids),
    )
    audit = codification_audit(msg.compiled, spec)
    problems = list(result.errors) + list(audit.failures)
    if problems:
        session.codification_retries += 1
        if session.codification_retries > MAX_CODIFICATION_RETRIES:
            session._enter(SessionState.FAILED, tick)
        raise ValidityFailure("; ".join(problems))
    session.compiled = msg.compiled
    session.constitutional_proof = result.proof
    session._emit(
        EventType.CODIFICATION_COMPILED,
        {"proof": result.proof, "selectors": len(msg.compiled.selectors)},
        tick,
    )
    session._enter(SessionState.AWAITING_APPROVAL, tick)


def _handle_approval(
    session: LegislativeSession, msg: LegislativeApproval, tick: int
) -> None:
    expected = {session.legislative_agent, session.regulatory_agent}
    if {msg.legislative_signer, msg.regulatory_signer} != expected:
        raise ValidityFailure("approval requires legislative and regulatory co-signers")
    if msg.legislative_signer == msg.regulatory_signer:
        raise ValidityFailure("co-signers must be distinct")
    session.approval = msg
    session._emit(
        EventType.LEGISLATIVE_APPROVED,
        {
            "legislative": msg.legislative_signer,
            "regulatory": msg.regulatory_signer,
            "proof": session.constitutional_proof,
        },
        tick,
    )
    session._enter(SessionState.DEPLOYED, tick)
    session._emit(
        EventType.DAG_DEPLOYED,
        {"mission_id": session.mission_id, "epoch": session.epoch},
        tick,
    )


_HANDLERS = {
    1: _handle_identity_request,
    2: _handle_attestation,
    3: _handle_proposal,
    4: _handle_bid,
    5: _handle_review,
    6: _handle_codification,
    7: _handle_approval,
}


def bidder_count(bids: Mapping[str, List[TaskBid]]) -> int:
    return len({b.sender for node_bids in bids.values() for b in node_bids})


def assignment_shares(
    spec: DagSpec, assignment: Mapping[str, str]
) -> Optional[List[float]]:
    """Budget-weighted share of mission value per assigned producer."""
    if not assignment:
        return None
    totals: Dict[str, int] = {}
    budget_sum = 0
    for node in spec.nodes:
        winner = assignment.get(node.node_id)
        if winner is None:
            return None
        totals[winner] = totals.get(winner, 0) + node.token_budget
        budget_sum += node.token_budget
    return [t / budget_sum for t in totals.values()]


def assignment_fairness(
    spec: DagSpec, assignment: Mapping[str, str], producer_count: int
) -> float:
    shares = assignment_shares(spec, assignment)
    if shares is None:
        raise ValidityFailure("assignment incomplete, fairness undefined")
    p = max(producer_count, len(shares))
    return fairness_score(shares, p)

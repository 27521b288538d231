"""Mission execution: the interleaved mission/node state machines, tiered
output verification, the behavioral firewall with freeze escalation, gate
filtering, adaptive refinement, and off-chain/on-chain reconciliation.

A mission owns one DAG of task nodes. Nodes move WAITING -> ELIGIBLE ->
EXECUTING and then through one of three verification routes depending on
their tier; the mission itself moves PENDING -> ACTIVE -> EXECUTING ->
VERIFICATION -> COMPLETED. Five safety predicates are re-checked after
every transition and any violation raises immediately.
"""

from __future__ import annotations

import hashlib
import math
import statistics
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .ledger import EventLog, EventType, Ledger, merkle_root
from .legislature import ConstitutionalParams, DagSpec


class ExecutionError(Exception):
    """Base class for execution-pipeline failures."""


class GuardBlocked(ExecutionError):
    pass


class CodeHashMismatch(ExecutionError):
    pass


class ServiceDeprecated(ExecutionError):
    pass


class VerificationLatencyExceeded(ExecutionError):
    pass


class WrongTierSubmission(ExecutionError):
    pass


class DuplicateExecutorSubmission(ExecutionError):
    pass


class DimensionMismatch(ExecutionError):
    pass


class EmergencyStopActive(ExecutionError):
    pass


class NodeNotExecuting(ExecutionError):
    pass


class UnapprovedPredicate(ExecutionError):
    pass


class TrancheFailure(ExecutionError):
    pass


class InvariantViolation(ExecutionError):
    pass


# Tick-denominated protocol constants. 1 tick = 1 ms.
CODE_HASH_LATENCY_CAP = 2_000
EXECUTOR_TIMEOUT = 300_000
FINALIZATION_RETRY_OFFSETS = (30_000, 120_000, 480_000)
PREDICATE_GAS_LIMIT = 200_000
OPTIMISTIC_WINDOW_MAX = 10_000
DEGRADED_OUTAGE_THRESHOLD = 1_800_000
DEGRADED_ABORT_TIMEOUT = 7_200_000
MAX_REFINEMENT_ITERATIONS = 3
JACCARD_MIN = 0.85
NUMERIC_TOLERANCE = 0.05

# Stake burned per offence, in ledger stake units.
SLASH_TIMEOUT_EXCEEDED = 50
SLASH_CODE_HASH_MISMATCH = 500
SLASH_NODE_FAILURE = 100

# The five safety predicates checked after every transition.
SAFETY_PREDICATES = (
    "gate-release",
    "dag-ordering",
    "escrow-release",
    "freeze-precedence",
    "pop-coverage",
)


class MissionPhase(Enum):
    PENDING = "PENDING"
    ACTIVE = "ACTIVE"
    EXECUTING = "EXECUTING"
    VERIFICATION = "VERIFICATION"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    ABORTED = "ABORTED"
    DEGRADED = "DEGRADED"


class NodePhase(Enum):
    WAITING = "WAITING"
    ELIGIBLE = "ELIGIBLE"
    EXECUTING = "EXECUTING"
    PENDING_VERIFICATION = "PENDING_VERIFICATION"
    PENDING_REVIEW = "PENDING_REVIEW"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    FROZEN = "FROZEN"
    PENDING_FINALIZATION = "PENDING_FINALIZATION"


class PopResult(Enum):
    APPROVED = "APPROVED"
    REJECTED = "REJECTED"
    PENDING = "PENDING"
    DELEGATED = "DELEGATED"


class GateOutcome(Enum):
    RELEASED = "RELEASED"
    VETOED = "VETOED"
    HELD = "HELD"


class FreezeDecision(Enum):
    FALSE_POSITIVE = "FALSE_POSITIVE"
    RESUME_WITH_AMENDMENT = "RESUME_WITH_AMENDMENT"
    TASK_REASSIGN = "TASK_REASSIGN"
    TERMINATE_MISSION = "TERMINATE_MISSION"


# A node counts as "beyond WAITING" for the ordering predicate once it is
# on the happy path; frozen, failed, and escrowed nodes are excluded.
_BEYOND_WAITING = frozenset(
    {
        NodePhase.ELIGIBLE,
        NodePhase.EXECUTING,
        NodePhase.PENDING_VERIFICATION,
        NodePhase.PENDING_REVIEW,
        NodePhase.COMPLETED,
    }
)

_NODE_ARCS = frozenset(
    {
        (NodePhase.WAITING, NodePhase.ELIGIBLE),
        (NodePhase.ELIGIBLE, NodePhase.EXECUTING),
        (NodePhase.ELIGIBLE, NodePhase.FROZEN),
        (NodePhase.ELIGIBLE, NodePhase.WAITING),
        (NodePhase.EXECUTING, NodePhase.PENDING_VERIFICATION),
        (NodePhase.EXECUTING, NodePhase.PENDING_REVIEW),
        (NodePhase.EXECUTING, NodePhase.FROZEN),
        (NodePhase.EXECUTING, NodePhase.FAILED),
        (NodePhase.EXECUTING, NodePhase.PENDING_FINALIZATION),
        (NodePhase.EXECUTING, NodePhase.WAITING),
        (NodePhase.PENDING_VERIFICATION, NodePhase.COMPLETED),
        (NodePhase.PENDING_VERIFICATION, NodePhase.FAILED),
        (NodePhase.PENDING_REVIEW, NodePhase.COMPLETED),
        (NodePhase.PENDING_REVIEW, NodePhase.FAILED),
        (NodePhase.FROZEN, NodePhase.ELIGIBLE),
        (NodePhase.FROZEN, NodePhase.FAILED),
        (NodePhase.FAILED, NodePhase.WAITING),
        (NodePhase.FAILED, NodePhase.ELIGIBLE),
        (NodePhase.PENDING_FINALIZATION, NodePhase.EXECUTING),
        (NodePhase.PENDING_FINALIZATION, NodePhase.FAILED),
    }
)

_MISSION_ARCS = frozenset(
    {
        (MissionPhase.PENDING, MissionPhase.ACTIVE),
        (MissionPhase.ACTIVE, MissionPhase.EXECUTING),
        (MissionPhase.EXECUTING, MissionPhase.VERIFICATION),
        (MissionPhase.EXECUTING, MissionPhase.ACTIVE),
        (MissionPhase.EXECUTING, MissionPhase.DEGRADED),
        (MissionPhase.EXECUTING, MissionPhase.FAILED),
        (MissionPhase.DEGRADED, MissionPhase.EXECUTING),
        (MissionPhase.VERIFICATION, MissionPhase.COMPLETED),
        (MissionPhase.VERIFICATION, MissionPhase.FAILED),
        (MissionPhase.VERIFICATION, MissionPhase.ACTIVE),
        (MissionPhase.FAILED, MissionPhase.ACTIVE),
    }
)


# ---------------------------------------------------------------------------
# Tier-2 consensus metrics
# ---------------------------------------------------------------------------


def jaccard(a: Iterable, b: Iterable) -> float:
    """Jaccard similarity of two collections treated as sets."""
    sa, sb = frozenset(a), frozenset(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def label_consensus(outputs: Sequence, threshold: int) -> Optional[str]:
    """Return the label reaching exact agreement, or None."""
    counts = Counter(str(o) for o in outputs)
    value, count = counts.most_common(1)[0]
    return value if count >= threshold else None


def set_consensus(outputs: Sequence[Iterable], threshold: int, minimum: float = JACCARD_MIN) -> bool:
    """True when some threshold-sized group is pairwise similar enough."""
    sets = [frozenset(o) for o in outputs]
    if threshold <= 1:
        return bool(sets)
    for size in range(len(sets), threshold - 1, -1):
        for combo in combinations(range(len(sets)), size):
            if all(
                jaccard(sets[i], sets[j]) >= minimum
                for i, j in combinations(combo, 2)
            ):
                return True
    return False


def numeric_consensus(outputs: Sequence, tolerance: float = NUMERIC_TOLERANCE) -> bool:
    """True when the population stddev is within tolerance of the mean."""
    values = [float(v) for v in outputs]
    if len(values) == 1:
        return True
    mean = statistics.fmean(values)
    spread = statistics.pstdev(values)
    if mean == 0:
        return spread == 0
    return spread <= tolerance * abs(mean)


def _canonical_output(output) -> str:
    if isinstance(output, str):
        return output
    if isinstance(output, (set, frozenset)):
        return ",".join(sorted(str(x) for x in output))
    if isinstance(output, (list, tuple)):
        return ",".join(str(x) for x in output)
    return repr(output)


def output_digest(output, proof: str = "") -> str:
    """Digest of output plus proof, the tier-1 attestation anchor."""
    h = hashlib.sha256()
    h.update(_canonical_output(output).encode())
    h.update(str(proof).encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Behavior windows and deviation scoring
# ---------------------------------------------------------------------------

INACTIVE = None


def _cosine_distance(a: Sequence[float], b: Sequence[float]) -> float:
    dot = math.fsum(x * y for x, y in zip(a, b))
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0 if na == nb else 1.0
    return 1.0 - dot / (na * nb)


class BehaviorWindow:
    """Rolling window of task embeddings for one agent.

    Scoring stays inactive until min_activation entries have
    accumulated; the window then self-calibrates its cosine spread.
    """

    def __init__(self, agent_id: str, capacity: int = 20, min_activation: int = 5):
        self.agent_id = agent_id
        self.capacity = capacity
        self.min_activation = min_activation
        self.embeddings: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def active(self) -> bool:
        return len(self.embeddings) >= self.min_activation

    def _check_dimension(self, vector: Sequence[float]) -> Tuple[float, ...]:
        vec = tuple(float(x) for x in vector)
        if self.embeddings and len(vec) != len(self.embeddings[0]):
            raise DimensionMismatch(
                f"vector of dimension {len(vec)} against window of "
                f"dimension {len(self.embeddings[0])}"
            )
        return vec

    def add(self, vector: Sequence[float]) -> None:
        self.embeddings.append(self._check_dimension(vector))

    def mean_vector(self) -> Tuple[float, ...]:
        dim = len(self.embeddings[0])
        n = len(self.embeddings)
        return tuple(
            math.fsum(e[i] for e in self.embeddings) / n for i in range(dim)
        )

    def sigma_cos(self) -> float:
        mu = self.mean_vector()
        distances = [_cosine_distance(e, mu) for e in self.embeddings]
        return max(statistics.pstdev(distances), 1e-9)


def deviation_score(window: BehaviorWindow, new_vector: Sequence[float]) -> Optional[float]:
    """Cosine distance to the window mean, in units of the window spread.

    Returns None (INACTIVE) while the window holds fewer than its
    activation minimum.
    """
    vec = window._check_dimension(new_vector)
    if not window.active:
        return INACTIVE
    mu = window.mean_vector()
    return _cosine_distance(vec, mu) / window.sigma_cos()


# ---------------------------------------------------------------------------
# Freeze bookkeeping
# ---------------------------------------------------------------------------

CAPTURE_GROUPS = (
    "reasoning_context",
    "tool_history",
    "message_log",
    "progress",
    "contract_state",
)


@dataclass(frozen=True)
class MemorySnapshot:
    """Sealed capture of an agent's working state at freeze time."""

    agent_id: str
    node_id: str
    tick: int
    reasoning_context: str = ""
    tool_history: str = ""
    message_log: str = ""
    progress: str = ""
    contract_state: str = ""

    def render(self) -> str:
        lines = [
            f"freeze snapshot agent={self.agent_id} node={self.node_id} tick={self.tick}"
        ]
        for group in CAPTURE_GROUPS:
            lines.append(f"[{group.replace('_', ' ')}]")
            lines.append(getattr(self, group))
        return "\n".join(lines) + "\n"

    def sealed_hash(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()


@dataclass
class FreezeRecord:
    tick: int
    node_id: str
    agent_id: str
    reason: str
    snapshot_hash: str
    false_positive: bool = False


@dataclass(frozen=True)
class GuardianVerdict:
    frozen: bool
    emergency_stop: bool
    reason: str = ""


class Guardian:
    """Behavioral firewall: deviation scoring, resource ceilings, and
    reputation-scaled freeze escalation with doubling count windows."""

    def __init__(
        self,
        params: Optional[ConstitutionalParams] = None,
        registry: Optional[Ledger] = None,
        log: Optional[EventLog] = None,
        mission_id: str = "",
        reputation_scaling_enabled: bool = True,
        reputation_scaling_bonus: int = 3,
        window_capacity: int = 20,
        min_activation: int = 5,
    ):
        self.params = params or ConstitutionalParams()
        self.registry = registry
        self.log = log
        self.mission_id = mission_id
        self.reputation_scaling_enabled = reputation_scaling_enabled
        self.reputation_scaling_bonus = reputation_scaling_bonus
        self.window_capacity = window_capacity
        self.min_activation = min_activation
        self.windows: Dict[str, Tuple[BehaviorWindow, BehaviorWindow]] = {}
        self.freeze_log: Dict[str, List[FreezeRecord]] = {}
        self.anomaly_counters: Dict[str, int] = {}
        self.stops_cleared: Dict[str, int] = {}
        self.emergency_stop = False

    def _emit(self, event_type: EventType, **kwargs) -> None:
        if self.log is not None:
            self.log.append(
                event_type,
                emitter="guardian",
                mission_id=self.mission_id or None,
                **kwargs,
            )

    def _windows_for(self, agent_id: str) -> Tuple[BehaviorWindow, BehaviorWindow]:
        pair = self.windows.get(agent_id)
        if pair is None:
            pair = (
                BehaviorWindow(agent_id, self.window_capacity, self.min_activation),
                BehaviorWindow(agent_id, self.window_capacity, self.min_activation),
            )
            self.windows[agent_id] = pair
        return pair

    def observe(
        self,
        agent_id: str,
        primary_vector: Sequence[float],
        secondary_vector: Optional[Sequence[float]] = None,
        tick: int = 0,
    ) -> Tuple[Optional[float], Optional[float]]:
        """Score one embedding through both channels, then absorb it.

        The two channels are independently calibrated; a freeze demands
        agreement from both. Returns the pair of z-scores (None while the
        corresponding window is still calibrating).
        """
        if secondary_vector is None:
            secondary_vector = primary_vector
        primary_window, secondary_window = self._windows_for(agent_id)
        z_primary = deviation_score(primary_window, primary_vector)
        z_secondary = deviation_score(secondary_window, secondary_vector)
        primary_window.add(primary_vector)
        secondary_window.add(secondary_vector)
        return z_primary, z_secondary

    def effective_freeze_threshold(self, agent_id: str) -> int:
        """Freezes tolerated per window, scaled up for reputation."""
        base = self.params.escalation_freeze_count
        if not self.reputation_scaling_enabled:
            return base
        rho = 0
        if self.registry is not None and agent_id in self.registry.agents:
            rho = self.registry.reputation_of(agent_id)
        return base + math.floor(rho / 1000 * self.reputation_scaling_bonus)

    def escalation_window(self, agent_id: str) -> int:
        """Current counting window in ticks; doubles per cleared stop."""
        n = self.stops_cleared.get(agent_id, 0)
        return self.params.base_escalation_window_ms * (2 ** n)

    def effective_freeze_count(self, agent_id: str, tick: int) -> int:
        """Non-false-positive freezes inside the current window."""
        lo = tick - self.escalation_window(agent_id)
        return sum(
            1
            for record in self.freeze_log.get(agent_id, ())
            if not record.false_positive and lo < record.tick <= tick
        )

    def report(
        self,
        node_id: str,
        agent_id: str,
        anomaly_type: str,
        magnitude: float,
        tick: int = 0,
        secondary_magnitude: Optional[float] = None,
        capture: Optional[Mapping[str, str]] = None,
    ) -> GuardianVerdict:
        """Record an anomaly and decide whether to freeze or escalate."""
        if self.emergency_stop:
            raise EmergencyStopActive(
                f"guardian refuses new reports for {agent_id or node_id}: "
                "emergency stop active"
            )
        self.anomaly_counters[node_id] = self.anomaly_counters.get(node_id, 0) + 1
        sigma = self.params.deviation_threshold_sigma
        if anomaly_type == "DEVIATION":
            freeze = magnitude > sigma and (
                secondary_magnitude is None or secondary_magnitude > sigma
            )
        elif anomaly_type == "TOOL_LIMIT_EXCEEDED":
            freeze = magnitude > self.params.max_tool_invocations
        elif anomaly_type == "MESSAGE_VOLUME_EXCEEDED":
            freeze = magnitude > self.params.max_message_volume
        elif anomaly_type == "DEPLOYMENT_SUBSTITUTION":
            freeze = True
        else:
            raise ValueError(f"unknown anomaly type {anomaly_type!r}")
        self._emit(
            EventType.ANOMALY_REPORTED,
            node_id=node_id,
            primary_entity=agent_id or None,
            tick=tick,
            payload={
                "anomaly_type": anomaly_type,
                "magnitude": magnitude,
                "secondary_magnitude": secondary_magnitude,
                "severity": "CRITICAL" if anomaly_type == "DEPLOYMENT_SUBSTITUTION" else "HIGH",
            },
        )
        if not freeze:
            return GuardianVerdict(False, False, reason="below threshold")
        self._freeze(node_id, agent_id, anomaly_type, tick, capture)
        stop = self.effective_freeze_count(agent_id, tick) >= self.effective_freeze_threshold(agent_id)
        if stop:
            self.emergency_stop = True
            self._emit(
                EventType.EMERGENCY_STOP,
                node_id=node_id,
                primary_entity=agent_id or None,
                tick=tick,
                payload={
                    "freeze_count": self.effective_freeze_count(agent_id, tick),
                    "threshold": self.effective_freeze_threshold(agent_id),
                    "window_ticks": self.escalation_window(agent_id),
                },
            )
        return GuardianVerdict(True, stop, reason=anomaly_type)

    def _freeze(
        self,
        node_id: str,
        agent_id: str,
        reason: str,
        tick: int,
        capture: Optional[Mapping[str, str]],
    ) -> FreezeRecord:
        groups = {k: str(v) for k, v in (capture or {}).items() if k in CAPTURE_GROUPS}
        snapshot = MemorySnapshot(agent_id, node_id, tick, **groups)
        sealed = snapshot.sealed_hash()
        self._emit(
            EventType.SNAPSHOT_SEALED,
            node_id=node_id,
            primary_entity=agent_id or None,
            tick=tick,
            payload={"snapshot_hash": sealed},
        )
        self._emit(
            EventType.FREEZE_TRIGGERED,
            node_id=node_id,
            primary_entity=agent_id or None,
            tick=tick,
            payload={"reason": reason},
        )
        record = FreezeRecord(tick, node_id, agent_id, reason, sealed)
        self.freeze_log.setdefault(agent_id, []).append(record)
        return record

    def last_freeze(self, agent_id: str, node_id: str) -> Optional[FreezeRecord]:
        for record in reversed(self.freeze_log.get(agent_id, [])):
            if record.node_id == node_id:
                return record
        return None

    def classify_false_positive(self, agent_id: str, record: FreezeRecord, tick: int = 0) -> None:
        """Retroactively exclude a freeze from escalation counting."""
        record.false_positive = True
        self._emit(
            EventType.FALSE_POSITIVE_CLASSIFIED,
            node_id=record.node_id,
            primary_entity=agent_id or None,
            tick=tick,
            payload={"freeze_tick": record.tick},
        )

    def clear_emergency_stop(self, agent_id: str, tick: int = 0) -> int:
        """Lift the stop; the agent's counting window doubles. Returns
        the new window length in ticks."""
        if not self.emergency_stop:
            raise GuardBlocked("no emergency stop to clear")
        self.emergency_stop = False
        self.stops_cleared[agent_id] = self.stops_cleared.get(agent_id, 0) + 1
        window = self.escalation_window(agent_id)
        self._emit(
            EventType.EMERGENCY_STOP_CLEARED,
            primary_entity=agent_id or None,
            tick=tick,
            payload={"new_window_ticks": window},
        )
        return window


# ---------------------------------------------------------------------------
# Fault injection and the freeze mirror
# ---------------------------------------------------------------------------


class FaultInjector:
    """Deterministic fault schedule: (tick, fault_kind, target) entries.

    Supported kinds: "commit_failure" (target: node id; consumed by the
    next commit attempt at or after the tick), "oracle_silence" (target:
    node or service id; makes the next code-hash lookup exceed the
    latency cap), and "sequencer_outage" (target: outage duration in
    ticks, as a string).
    """

    def __init__(self, schedule: Iterable[Tuple[int, str, str]] = ()):
        self._entries: List[List] = []
        self.outages: List[Tuple[int, int]] = []
        for tick, kind, target in schedule:
            if kind == "sequencer_outage":
                self.outages.append((int(tick), int(tick) + int(target)))
            else:
                self._entries.append([int(tick), kind, target, False])

    def fires(self, tick: int, kind: str, target: str) -> bool:
        """Consume the first matching scheduled fault, if any."""
        for entry in self._entries:
            if entry[3] or entry[1] != kind or entry[0] > tick:
                continue
            if entry[2] in ("", "*", target):
                entry[3] = True
                return True
        return False

    def outage_at(self, tick: int) -> Optional[Tuple[int, int]]:
        for start, end in self.outages:
            if start <= tick < end:
                return (start, end)
        return None


class FreezeMirror:
    """Local cache of freeze/failure state on the routing hot path.

    After a crash the mirror must be rebuilt from the ledger before any
    routing decision is taken; requests arriving mid-recovery are queued.
    """

    def __init__(self):
        self.active: Set[Tuple[str, str]] = set()
        self.recovered = True
        self.deferred: List[Tuple[str, str]] = []

    def is_active(self, mission_id: str, node_id: str) -> bool:
        return (mission_id, node_id) in self.active

    def set_active(self, mission_id: str, node_id: str) -> None:
        self.active.add((mission_id, node_id))

    def clear(self, mission_id: str, node_id: str) -> None:
        self.active.discard((mission_id, node_id))

    def crash(self) -> None:
        self.active.clear()
        self.recovered = False

    def drain_deferred(self) -> List[Tuple[str, str]]:
        drained, self.deferred = self.deferred, []
        return drained


def freeze_mirror_recover(mirror: FreezeMirror, active_missions: Iterable["Mission"]) -> str:
    """Rebuild mirror entries from ledger state; returns "RECOVERED"."""
    for mission in active_missions:
        for node_id, phase in mission.node_states.items():
            if phase in (NodePhase.FROZEN, NodePhase.FAILED):
                mirror.set_active(mission.mission_id, node_id)
    mirror.recovered = True
    return "RECOVERED"


# ---------------------------------------------------------------------------
# Verification records, faults, gate predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Submission:
    executor: str
    output: object
    proof: str
    tick: int


@dataclass
class ProofRecord:
    node_id: str
    tier: int
    status: PopResult
    output_hash: str = ""
    first_tick: int = 0
    submissions: List[Submission] = field(default_factory=list)
    consensus_value: Optional[str] = None
    excluded: Tuple[str, ...] = ()


@dataclass
class EscrowedOutput:
    output: object
    proof: str
    executor: str
    tier: int
    held_since: int
    retry_ticks: Tuple[int, ...]
    attempts: int = 0


FAULT_TYPES = frozenset(
    {
        "POP_REJECTED",
        "FREEZE_REASSIGN",
        "TIMEOUT",
        "CODEHASH_MISMATCH",
        "STATE_TRANSITION_FAILURE",
        "CONSENSUS_FAILED",
    }
)

MICRO_SERVICE_FAULT = "MICRO_SERVICE_FAULT"
AGENT_BEHAVIORAL_FAULT = "AGENT_BEHAVIORAL_FAULT"
LEGISLATIVE_SPECIFICATION_FAULT = "LEGISLATIVE_SPECIFICATION_FAULT"


@dataclass(frozen=True)
class FaultSignal:
    fault_type: str
    node_id: str
    agent_id: str = ""
    tier: int = 0
    detail: str = ""


def classify_fault(signal: FaultSignal) -> str:
    """Map a fault signal to the responsible layer."""
    if signal.fault_type not in FAULT_TYPES:
        raise ValueError(f"unknown fault type {signal.fault_type!r}")
    if signal.fault_type == "CONSENSUS_FAILED":
        return LEGISLATIVE_SPECIFICATION_FAULT
    if signal.fault_type == "FREEZE_REASSIGN":
        return AGENT_BEHAVIORAL_FAULT
    if signal.fault_type == "POP_REJECTED" and signal.tier >= 2:
        return AGENT_BEHAVIORAL_FAULT
    return MICRO_SERVICE_FAULT


@dataclass(frozen=True)
class RefinementAction:
    kind: str  # partial | full | abort
    category: str
    node_id: str


@dataclass(frozen=True)
class PredicateCheck:
    """Callable implementation of a whitelisted gate predicate."""

    predicate_id: str
    fn: Callable[["Mission"], bool]
    gas_cost: int = 0


@dataclass(frozen=True)
class ReconcileReport:
    phase: str
    passed: bool
    divergences: Tuple[str, ...] = ()
    warnings: Tuple[str, ...] = ()


def unaudited_transition_bound(rate_per_second: float, anchor_interval_ticks: float,
                               ticks_per_second: int = 1000) -> float:
    """Worst-case off-chain transitions between two anchor commits.

    The transition rate is quoted per second while intervals are in
    ticks (1 tick = 1 ms), so the interval is converted before the
    product is taken.
    """
    return rate_per_second * anchor_interval_ticks / ticks_per_second


# ---------------------------------------------------------------------------
# The mission state machine
# ---------------------------------------------------------------------------


class Mission:
    """One mission's interleaved mission/node state machine."""

    def __init__(
        self,
        spec: DagSpec,
        assignment: Mapping[str, str],
        params: Optional[ConstitutionalParams] = None,
        registry: Optional[Ledger] = None,
        economy=None,
        guardian: Optional[Guardian] = None,
        log: Optional[EventLog] = None,
        mirror: Optional[FreezeMirror] = None,
        faults: Optional[FaultInjector] = None,
    ):
        self.spec = spec
        self.mission_id = spec.mission_id
        self.assignment: Dict[str, str] = dict(assignment)
        self.params = params or ConstitutionalParams()
        self.registry = registry
        self.economy = economy
        self.log = log if log is not None else EventLog()
        self.guardian = guardian or Guardian(
            self.params, registry, self.log, spec.mission_id
        )
        self.mirror = mirror or FreezeMirror()
        self.faults = faults or FaultInjector()

        self.state = MissionPhase.PENDING
        self.nodes = {n.node_id: n for n in spec.nodes}
        self.node_states: Dict[str, NodePhase] = {
            n.node_id: NodePhase.WAITING for n in spec.nodes
        }
        self.epoch = spec.epoch
        self.refinement_iterations = 0
        self.deployment_complete = False
        self.suspended = False
        self.released = False
        self.gate_outcome: Optional[GateOutcome] = None
        self.abort_reason = ""

        self.proofs: Dict[str, ProofRecord] = {}
        self.escrow: Dict[str, EscrowedOutput] = {}
        self.commit_roots: Dict[str, str] = {}
        self.node_deadline: Dict[str, int] = {}
        self.review_entry: Dict[str, int] = {}
        self.review_deadline: Dict[str, int] = {}
        self.review_round: Dict[str, int] = {}
        self.expected_executors: Dict[str, Tuple[str, ...]] = {}
        self.offchain_completions: Dict[str, Tuple[str, int]] = {}
        self.onchain_completions: Dict[str, Tuple[str, int]] = {}
        self.fault_signals: List[FaultSignal] = []
        self.service_overrides: Dict[str, str] = {}
        self.deploy_log: List[Tuple[int, int, int]] = []
        self.degraded_since: Optional[int] = None
        self._degraded_queue: List[Tuple[EventType, dict]] = []

    # -- plumbing ----------------------------------------------------------

    def node(self, node_id: str):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GuardBlocked(f"unknown node {node_id}") from None

    def effective_service(self, node_id: str) -> str:
        return self.service_overrides.get(node_id, self.node(node_id).service_id)

    def _emit(self, event_type: EventType, node_id: Optional[str] = None,
              tick: int = 0, payload: Optional[dict] = None,
              entity: Optional[str] = None) -> None:
        kwargs = dict(
            emitter="execution",
            mission_id=self.mission_id,
            epoch=self.epoch,
            node_id=node_id,
            primary_entity=entity,
            tick=tick,
            payload=payload,
        )
        if self.state is MissionPhase.DEGRADED:
            # Sequencer unreachable: hold the record and replay on exit.
            self._degraded_queue.append((event_type, kwargs))
        else:
            self.log.append(event_type, **kwargs)

    def _set_node(self, node_id: str, phase: NodePhase, tick: int,
                  event: Optional[EventType] = None,
                  payload: Optional[dict] = None) -> None:
        current = self.node_states[node_id]
        if (current, phase) not in _NODE_ARCS:
            raise InvariantViolation(
                f"illegal node transition {current.name} -> {phase.name} for {node_id}"
            )
        self.node_states[node_id] = phase
        if event is not None:
            self._emit(event, node_id=node_id, tick=tick, payload=payload,
                       entity=self.assignment.get(node_id))

    def _set_mission(self, phase: MissionPhase, tick: int,
                     event: Optional[EventType] = None,
                     payload: Optional[dict] = None) -> None:
        if (self.state, phase) not in _MISSION_ARCS:
            raise InvariantViolation(
                f"illegal mission transition {self.state.name} -> {phase.name}"
            )
        self.state = phase
        if event is not None:
            self._emit(event, tick=tick, payload=payload)

    def _slash(self, agent_id: str, node_id: str, amount: Optional[int],
               reason: str, tick: int) -> int:
        """Burn locked stake; amount None means the full locked balance."""
        if self.economy is None or not agent_id:
            return 0
        locked = self.economy.locked_stake(agent_id, node_id)
        if locked <= 0:
            return 0
        burn = locked if amount is None else min(amount, locked)
        return self.economy.slash_stake(
            agent_id, node_id, burn, reason, caller="execution", tick=tick
        )

    def _adjust_reputation(self, agent_id: str, delta: int, rationale: str, tick: int) -> None:
        if self.registry is not None and agent_id in self.registry.agents:
            self.registry.update_reputation(
                agent_id, delta, rationale, caller="execution", tick=tick
            )

    def _clear_active(self, node_id: str) -> None:
        agent = self.assignment.get(node_id)
        if self.registry is not None and agent in self.registry.agents:
            self.registry.clear_active(agent, node_id)

    # -- deployment and activation ------------------------------------------

    def activate(self, tick: int = 0) -> MissionPhase:
        """PENDING -> ACTIVE once every tranche has been committed."""
        if not self.deployment_complete:
            raise GuardBlocked("deployment incomplete: finalize all tranches first")
        self._set_mission(MissionPhase.ACTIVE, tick)
        self._assert_invariants()
        return self.state

    def begin_execution(self, tick: int = 0) -> MissionPhase:
        """ACTIVE -> EXECUTING; root nodes become eligible."""
        self._set_mission(MissionPhase.EXECUTING, tick)
        self._refresh_eligibility(tick)
        self._assert_invariants()
        return self.state

    def _refresh_eligibility(self, tick: int) -> None:
        for node_id, phase in self.node_states.items():
            if phase is not NodePhase.WAITING:
                continue
            preds = self.spec.predecessors(node_id)
            if all(self.node_states[p] is NodePhase.COMPLETED for p in preds):
                self._set_node(node_id, NodePhase.ELIGIBLE, tick, EventType.NODE_ELIGIBLE)

    # -- routing -------------------------------------------------------------

    def route_task(self, node_id: str, tick: int = 0,
                   live_hash: Optional[str] = None,
                   oracle_latency: int = 0) -> Optional[NodePhase]:
        """ELIGIBLE -> EXECUTING behind the four routing guards.

        Returns None (request deferred) while the freeze mirror is still
        recovering; the request is queued on the mirror.
        """
        node = self.node(node_id)
        if not self.mirror.recovered:
            self.mirror.deferred.append((self.mission_id, node_id))
            return None
        if self.guardian.emergency_stop:
            raise GuardBlocked("emergency stop active")
        if self.suspended:
            raise GuardBlocked("mission suspended pending reconciliation")
        if not self.deployment_complete:
            raise GuardBlocked("deployment incomplete")
        if self.state is not MissionPhase.EXECUTING:
            raise GuardBlocked(f"mission {self.state.name}, routing requires EXECUTING")
        if self.node_states[node_id] is not NodePhase.ELIGIBLE:
            raise GuardBlocked(
                f"node {node_id} is {self.node_states[node_id].name}, not ELIGIBLE"
            )
        if self.mirror.is_active(self.mission_id, node_id):
            raise GuardBlocked(f"freeze mirror active for {node_id}")

        agent = self.assignment.get(node_id, "")
        service_id = self.effective_service(node_id)
        if self.registry is not None:
            record = self.registry.services.get(service_id)
            if record is None:
                raise GuardBlocked(f"service {service_id} not registered")
            if record.deprecated:
                raise ServiceDeprecated(service_id)
            latency = oracle_latency
            if self.faults.fires(tick, "oracle_silence", node_id) or self.faults.fires(
                tick, "oracle_silence", service_id
            ):
                latency = CODE_HASH_LATENCY_CAP + 1
            if latency > CODE_HASH_LATENCY_CAP:
                self._emit(
                    EventType.CODEHASH_MISMATCH,
                    node_id=node_id,
                    tick=tick,
                    payload={"cause": "oracle_timeout", "latency": latency},
                    entity=agent or None,
                )
                raise VerificationLatencyExceeded(
                    f"hash oracle silent for {latency} ticks "
                    f"(cap {CODE_HASH_LATENCY_CAP}); treated as mismatch"
                )
            live = live_hash if live_hash is not None else record.code_hash
            if not self.registry.verify_code_hash(
                service_id, live, tick, self.mission_id, node_id
            ):
                self._slash(agent, node_id, SLASH_CODE_HASH_MISMATCH,
                            "codeHashMismatch", tick)
                self.guardian.report(
                    node_id, agent, "DEPLOYMENT_SUBSTITUTION", 1.0, tick
                )
                self._set_node(node_id, NodePhase.FROZEN, tick)
                self.mirror.set_active(self.mission_id, node_id)
                self.fault_signals.append(
                    FaultSignal("CODEHASH_MISMATCH", node_id, agent)
                )
                self._assert_invariants()
                raise CodeHashMismatch(
                    f"live hash for {service_id} differs from the legislated anchor"
                )

        self._set_node(
            node_id, NodePhase.EXECUTING, tick, EventType.TASK_ROUTED,
            payload={"agent": agent, "service": service_id},
        )
        self.node_deadline[node_id] = tick + node.timeout_ms
        if self.registry is not None and agent in self.registry.agents:
            self.registry.mark_active(agent, node_id)
        self._assert_invariants()
        return self.node_states[node_id]

    # -- proof-of-progress ----------------------------------------------------

    def submit_pop(self, node_id: str, tier: int, output, proof: str,
                   executor: str = "", tick: int = 0) -> PopResult:
        """Submit one executor's output for verification.

        Tier 1 checks the attestation digest against the node's schema
        anchor. Tier 2 buffers until the redundancy factor is reached,
        then applies the agreement metric for the node's output kind.
        Tier 3 delegates to human review.
        """
        node = self.node(node_id)
        if tier != node.pop_tier:
            raise WrongTierSubmission(
                f"node {node_id} is tier {node.pop_tier}, got tier {tier} submission"
            )
        phase = self.node_states[node_id]
        buffering = (
            tier == 2
            and phase is NodePhase.PENDING_VERIFICATION
            and node_id in self.proofs
            and self.proofs[node_id].status is PopResult.PENDING
        )
        if phase is not NodePhase.EXECUTING and not buffering:
            raise NodeNotExecuting(
                f"node {node_id} is {phase.name}; submissions need EXECUTING"
            )
        executor = executor or self.assignment.get(node_id, "")
        record = self.proofs.get(node_id)
        if record is None:
            record = ProofRecord(node_id, tier, PopResult.PENDING, first_tick=tick)
            self.proofs[node_id] = record
        if any(s.executor == executor for s in record.submissions):
            raise DuplicateExecutorSubmission(
                f"{executor} already submitted for {node_id}"
            )
        submission = Submission(executor, output, proof, tick)

        if phase is NodePhase.EXECUTING:
            # Commit stage: digest the node's event sub-log; an injected
            # fault lands the output in escrow instead.
            if self.faults.fires(tick, "commit_failure", node_id):
                self.escrow[node_id] = EscrowedOutput(
                    output, proof, executor, tier, tick,
                    tuple(tick + off for off in FINALIZATION_RETRY_OFFSETS),
                )
                self._set_node(
                    node_id, NodePhase.PENDING_FINALIZATION, tick,
                    EventType.PENDING_FINALIZATION,
                    payload={"retries": list(self.escrow[node_id].retry_ticks)},
                )
                self._assert_invariants()
                return PopResult.PENDING
            self.commit_roots[node_id] = self._commit_root(node_id)
            if tier == 3:
                record.submissions.append(submission)
                record.status = PopResult.DELEGATED
                self.review_entry[node_id] = tick
                self.review_round[node_id] = 0
                self.review_deadline[node_id] = (
                    tick + self.params.max_node_timeout_ms
                )
                self._set_node(
                    node_id, NodePhase.PENDING_REVIEW, tick,
                    EventType.DELEGATED_REVIEW_REQUESTED,
                    payload={"commit_root": self.commit_roots[node_id]},
                )
                self._emit(EventType.POP_SUBMITTED, node_id=node_id, tick=tick,
                           payload={"tier": tier, "executor": executor})
                self._assert_invariants()
                return PopResult.DELEGATED
            self._set_node(
                node_id, NodePhase.PENDING_VERIFICATION, tick,
                payload={"commit_root": self.commit_roots[node_id]},
            )

        record.submissions.append(submission)
        self._emit(EventType.POP_SUBMITTED, node_id=node_id, tick=tick,
                   payload={"tier": tier, "executor": executor})

        if tier == 1:
            anchored = node.output_schema_hash
            if output_digest(output, proof) == anchored:
                return self._record_pop_result(node_id, PopResult.APPROVED, output, tick)
            return self._record_pop_result(node_id, PopResult.REJECTED, output, tick)

        # Tier 2: wait for the full redundancy set, then score agreement.
        if len(record.submissions) < node.redundancy_factor:
            return PopResult.PENDING
        return self._finalize_consensus(node_id, tick)

    def _commit_root(self, node_id: str) -> str:
        events = [e for e in self.log.events if e.node_id == node_id]
        if not events:
            events = [e for e in self.log.events if e.mission_id == self.mission_id]
        return merkle_root(events)

    def _finalize_consensus(self, node_id: str, tick: int) -> PopResult:
        node = self.node(node_id)
        record = self.proofs[node_id]
        outputs = [s.output for s in record.submissions]
        if node.output_kind == "label":
            value = label_consensus(outputs, node.consensus_threshold)
            agreed = value is not None
            if agreed:
                record.consensus_value = value
        elif node.output_kind == "set":
            agreed = set_consensus(outputs, node.consensus_threshold)
        elif node.output_kind == "numeric":
            agreed = numeric_consensus(outputs)
        else:
            raise ValueError(f"unknown output kind {node.output_kind!r}")
        result = PopResult.APPROVED if agreed else PopResult.REJECTED
        representative = record.consensus_value if record.consensus_value is not None else outputs[0]
        return self._record_pop_result(node_id, result, representative, tick)

    def _record_pop_result(self, node_id: str, result: PopResult, output, tick: int) -> PopResult:
        record = self.proofs[node_id]
        record.status = result
        if result is PopResult.APPROVED:
            record.output_hash = output_digest(output)
            self.offchain_completions[node_id] = (record.output_hash, tick)
            self._emit(EventType.POP_APPROVED, node_id=node_id, tick=tick,
                       payload={"tier": record.tier, "output_hash": record.output_hash})
        else:
            self._emit(EventType.POP_REJECTED, node_id=node_id, tick=tick,
                       payload={"tier": record.tier})
        self._assert_invariants()
        return result

    def assign_executors(self, node_id: str, executors: Iterable[str]) -> None:
        """Declare the redundant executor set expected for a tier-2 node."""
        self.expected_executors[node_id] = tuple(executors)

    # -- advancing nodes --------------------------------------------------------

    def advance_node(self, node_id: str, pop_result: PopResult, tick: int = 0) -> "Mission":
        """Confirm a verification result on-chain and update eligibility."""
        phase = self.node_states[node_id]
        if phase is not NodePhase.PENDING_VERIFICATION:
            raise NodeNotExecuting(
                f"node {node_id} is {phase.name}; expected PENDING_VERIFICATION"
            )
        record = self.proofs.get(node_id)
        if record is None or record.status is PopResult.PENDING:
            raise NodeNotExecuting(f"verification for {node_id} still pending")
        if pop_result is PopResult.APPROVED and record.status is PopResult.APPROVED:
            self._complete_node(node_id, tick)
        elif pop_result is PopResult.REJECTED or record.status is PopResult.REJECTED:
            self._fail_node(node_id, tick, "pop_rejected")
            self.fault_signals.append(
                FaultSignal("POP_REJECTED", node_id,
                            self.assignment.get(node_id, ""), tier=record.tier)
            )
        else:
            raise ValueError(f"cannot advance on {pop_result}")
        self._assert_invariants()
        return self

    def resolve_review(self, node_id: str, approve: bool,
                       adjudicator: str = "", tick: int = 0) -> PopResult:
        """Settle a tier-3 delegated review."""
        if self.node_states[node_id] is not NodePhase.PENDING_REVIEW:
            raise NodeNotExecuting(f"node {node_id} is not awaiting review")
        record = self.proofs[node_id]
        if approve:
            record.status = PopResult.APPROVED
            submission = record.submissions[-1]
            record.output_hash = output_digest(submission.output)
            self.offchain_completions[node_id] = (record.output_hash, tick)
            self._emit(EventType.DELEGATED_APPROVED, node_id=node_id, tick=tick,
                       payload={"adjudicator": adjudicator})
            self._complete_node(node_id, tick)
        else:
            record.status = PopResult.REJECTED
            self._emit(EventType.DELEGATED_REJECTED, node_id=node_id, tick=tick,
                       payload={"adjudicator": adjudicator})
            self._fail_node(node_id, tick, "review_rejected")
            self.fault_signals.append(
                FaultSignal("POP_REJECTED", node_id,
                            self.assignment.get(node_id, ""), tier=3)
            )
        self._assert_invariants()
        return record.status

    def _complete_node(self, node_id: str, tick: int) -> None:
        record = self.proofs[node_id]
        from_review = self.node_states[node_id] is NodePhase.PENDING_REVIEW
        self._set_node(
            node_id, NodePhase.COMPLETED, tick, EventType.TASK_COMPLETED,
            payload={"output_hash": record.output_hash, "tier": record.tier},
        )
        self.onchain_completions[node_id] = (record.output_hash, tick)
        self._clear_active(node_id)
        if from_review:
            self.review_deadline.pop(node_id, None)
        self._refresh_eligibility(tick)
        if all(p is NodePhase.COMPLETED for p in self.node_states.values()):
            self._set_mission(MissionPhase.VERIFICATION, tick)

    def _fail_node(self, node_id: str, tick: int, cause: str) -> None:
        self._set_node(
            node_id, NodePhase.FAILED, tick, EventType.TASK_FAILED,
            payload={"cause": cause},
        )
        self.mirror.set_active(self.mission_id, node_id)
        self._clear_active(node_id)
        self.review_deadline.pop(node_id, None)

    # -- tick-driven arcs ----------------------------------------------------------

    def check_timeouts(self, tick: int) -> List[str]:
        """Fire every tick-driven arc due at or before the given tick.

        Covers execution timeouts, human-review escalation, escrow retry
        attempts, and the degraded-mode abort deadline. Returns the ids
        of nodes whose state changed.
        """
        changed: List[str] = []
        for node_id in list(self.node_states):
            phase = self.node_states[node_id]
            if phase is NodePhase.EXECUTING:
                deadline = self.node_deadline.get(node_id)
                if deadline is not None and tick > deadline:
                    self._timeout_node(node_id, tick)
                    changed.append(node_id)
            elif phase is NodePhase.PENDING_REVIEW:
                if self._expire_review(node_id, tick):
                    changed.append(node_id)
            elif phase is NodePhase.PENDING_FINALIZATION:
                if self._retry_finalization(node_id, tick):
                    changed.append(node_id)
            elif phase is NodePhase.PENDING_VERIFICATION:
                record = self.proofs.get(node_id)
                if record is None or tick - record.first_tick <= EXECUTOR_TIMEOUT:
                    continue
                if record.status is PopResult.PENDING:
                    self._expire_pop_window(node_id, tick)
                # Liveness: a verdict left unconfirmed past the executor
                # window is confirmed by the clock.
                if (
                    record.status is not PopResult.PENDING
                    and self.node_states[node_id] is NodePhase.PENDING_VERIFICATION
                ):
                    self.advance_node(node_id, record.status, tick)
                    changed.append(node_id)
        if (
            self.state is MissionPhase.DEGRADED
            and self.degraded_since is not None
            and tick - self.degraded_since >= DEGRADED_ABORT_TIMEOUT
        ):
            self.abort("degraded_adjudicator_timeout", tick)
        self._assert_invariants()
        return changed

    def _timeout_node(self, node_id: str, tick: int) -> None:
        agent = self.assignment.get(node_id, "")
        self._emit(EventType.TASK_TIMEOUT, node_id=node_id, tick=tick,
                   payload={"deadline": self.node_deadline[node_id]},
                   entity=agent or None)
        self._adjust_reputation(agent, -SLASH_TIMEOUT_EXCEEDED, "task timeout", tick)
        self._slash(agent, node_id, SLASH_TIMEOUT_EXCEEDED, "timeoutExceeded", tick)
        self._fail_node(node_id, tick, "timeout")
        self.fault_signals.append(FaultSignal("TIMEOUT", node_id, agent))

    def _expire_review(self, node_id: str, tick: int) -> bool:
        deadline = self.review_deadline.get(node_id)
        if deadline is None or tick <= deadline:
            return False
        if self.review_round.get(node_id, 0) == 0:
            # Primary pool timed out: escalate to the backup pool, which
            # gets until twice the original budget.
            self.review_round[node_id] = 1
            self.review_deadline[node_id] = (
                self.review_entry[node_id] + 2 * self.params.max_node_timeout_ms
            )
            self._emit(
                EventType.DELEGATED_REVIEW_REQUESTED, node_id=node_id, tick=tick,
                payload={"pool": "backup",
                         "deadline": self.review_deadline[node_id]},
            )
            return False
        agent = self.assignment.get(node_id, "")
        self._emit(EventType.TASK_TIMEOUT, node_id=node_id, tick=tick,
                   payload={"stage": "human_review"}, entity=agent or None)
        self.proofs[node_id].status = PopResult.REJECTED
        self._fail_node(node_id, tick, "human_review_timeout")
        self.fault_signals.append(FaultSignal("TIMEOUT", node_id, agent, tier=3))
        return True

    def _retry_finalization(self, node_id: str, tick: int) -> bool:
        held = self.escrow[node_id]
        changed = False
        while held.attempts < len(held.retry_ticks):
            due = held.retry_ticks[held.attempts]
            if tick < due:
                break
            held.attempts += 1
            if not self.faults.fires(due, "commit_failure", node_id):
                self._emit(EventType.ESCROW_RELEASED, node_id=node_id, tick=due,
                           payload={"attempt": held.attempts})
                del self.escrow[node_id]
                self._set_node(node_id, NodePhase.EXECUTING, due)
                # The landed commit carries the escrowed submission through
                # the normal verification path.
                result = self.submit_pop(
                    node_id, held.tier, held.output, held.proof,
                    executor=held.executor, tick=due,
                )
                del result
                return True
            changed = True
        if held.attempts >= len(held.retry_ticks) and node_id in self.escrow:
            agent = self.assignment.get(node_id, "")
            self._emit(EventType.FINALIZATION_FAILED, node_id=node_id, tick=tick,
                       payload={"attempts": held.attempts})
            del self.escrow[node_id]
            self._fail_node(node_id, tick, "finalization_failed")
            self.fault_signals.append(
                FaultSignal("STATE_TRANSITION_FAILURE", node_id, agent)
            )
            return True
        return changed

    def _expire_pop_window(self, node_id: str, tick: int) -> bool:
        node = self.node(node_id)
        record = self.proofs.get(node_id)
        if (
            record is None
            or record.tier != 2
            or record.status is not PopResult.PENDING
            or tick - record.first_tick <= EXECUTOR_TIMEOUT
        ):
            return False
        submitted = {s.executor for s in record.submissions}
        missing = [e for e in self.expected_executors.get(node_id, ()) if e not in submitted]
        for executor in missing:
            self._slash(executor, node_id, SLASH_TIMEOUT_EXCEEDED,
                        "timeoutExceeded", tick)
            self._emit(EventType.TASK_TIMEOUT, node_id=node_id, tick=tick,
                       payload={"stage": "redundant_executor"}, entity=executor)
        record.excluded = tuple(missing)
        if len(record.submissions) >= node.consensus_threshold:
            self._finalize_consensus(node_id, tick)
        else:
            self._record_pop_result(node_id, PopResult.REJECTED,
                                    record.submissions[0].output if record.submissions else "",
                                    tick)
        return True

    # -- guardian integration ---------------------------------------------------------

    def report_anomaly(self, node_id: str, anomaly_type: str, magnitude: float,
                       tick: int = 0, secondary_magnitude: Optional[float] = None,
                       capture: Optional[Mapping[str, str]] = None) -> GuardianVerdict:
        """Forward an anomaly to the guardian; apply any freeze to the node."""
        agent = self.assignment.get(node_id, "")
        verdict = self.guardian.report(
            node_id, agent, anomaly_type, magnitude, tick,
            secondary_magnitude, capture,
        )
        if verdict.frozen and self.node_states[node_id] in (
            NodePhase.ELIGIBLE, NodePhase.EXECUTING,
        ):
            self._set_node(node_id, NodePhase.FROZEN, tick)
            self.mirror.set_active(self.mission_id, node_id)
        self._assert_invariants()
        return verdict

    def resolve_freeze(self, node_id: str, decision: FreezeDecision,
                       tick: int = 0, adjudicator: str = "",
                       amendment: Optional[str] = None) -> NodePhase:
        """Apply an adjudicated outcome to a frozen node."""
        if self.node_states[node_id] is not NodePhase.FROZEN:
            raise GuardBlocked(f"node {node_id} is not FROZEN")
        agent = self.assignment.get(node_id, "")
        record = self.guardian.last_freeze(agent, node_id)
        if decision is FreezeDecision.FALSE_POSITIVE:
            if record is not None:
                self.guardian.classify_false_positive(agent, record, tick)
            self._unfreeze(node_id, tick, adjudicator, {"decision": decision.value})
        elif decision is FreezeDecision.RESUME_WITH_AMENDMENT:
            self.guardian.anomaly_counters[node_id] = 0
            self._adjust_reputation(agent, -20, "freeze amendment", tick)
            self._unfreeze(node_id, tick, adjudicator,
                           {"decision": decision.value, "amendment": amendment or ""})
        elif decision is FreezeDecision.TASK_REASSIGN:
            self._adjust_reputation(agent, -SLASH_NODE_FAILURE, "freeze reassignment", tick)
            self._slash(agent, node_id, SLASH_NODE_FAILURE, "nodeFailure", tick)
            self._fail_node(node_id, tick, "freeze_reassign")
            self.fault_signals.append(FaultSignal("FREEZE_REASSIGN", node_id, agent))
        elif decision is FreezeDecision.TERMINATE_MISSION:
            self._adjust_reputation(agent, -1000, "critical freeze violation", tick)
            self._slash(agent, node_id, None, "missionAbort", tick)
            self.abort("freeze_critical_violation", tick)
        else:
            raise ValueError(f"unknown freeze decision {decision!r}")
        self._assert_invariants()
        return self.node_states[node_id]

    def _unfreeze(self, node_id: str, tick: int, adjudicator: str, payload: dict) -> None:
        payload = dict(payload, adjudicator=adjudicator)
        self._set_node(node_id, NodePhase.ELIGIBLE, tick,
                       EventType.UNFREEZE_APPROVED, payload=payload)
        self.mirror.clear(self.mission_id, node_id)

    # -- gate filtering ---------------------------------------------------------

    def gate_filter(self, checks: Sequence[PredicateCheck] = (),
                    tick: int = 0) -> GateOutcome:
        """Evaluate release predicates once every node is COMPLETED."""
        if self.suspended:
            raise GuardBlocked("mission suspended pending reconciliation")
        if self.state is not MissionPhase.VERIFICATION:
            raise GuardBlocked(
                "gate evaluation requires all nodes COMPLETED "
                f"(mission is {self.state.name})"
            )
        whitelist = {
            entry["predicateId"]: entry for entry in self.spec.gate_predicates
        }
        for check in checks:
            if check.predicate_id not in whitelist:
                raise UnapprovedPredicate(check.predicate_id)
        impls = {check.predicate_id: check for check in checks}
        held = False
        for predicate_id, entry in whitelist.items():
            if entry.get("kind", "automated") != "automated":
                held = True
                continue
            impl = impls.get(predicate_id)
            if impl is None:
                held = True
                continue
            if impl.gas_cost > PREDICATE_GAS_LIMIT:
                self._emit(EventType.OPERATION_VALIDATED, tick=tick,
                           payload={"predicate": predicate_id,
                                    "gas": impl.gas_cost,
                                    "outcome": "gas budget exceeded"})
                held = True
                continue
            try:
                satisfied = bool(impl.fn(self))
            except Exception:
                satisfied = False
            if not satisfied:
                held = True
        if held:
            self.gate_outcome = GateOutcome.HELD
            return GateOutcome.HELD
        return self._release_output(tick)

    def _release_output(self, tick: int) -> GateOutcome:
        self.gate_outcome = GateOutcome.RELEASED
        self.released = True
        self._emit(EventType.OUTPUT_RELEASED, tick=tick)
        self._set_mission(MissionPhase.COMPLETED, tick, EventType.MISSION_COMPLETED)
        self._assert_invariants()
        return GateOutcome.RELEASED

    def release_output(self, adjudicator: str, tick: int = 0) -> GateOutcome:
        """Manual release after a HELD gate outcome."""
        if self.state is not MissionPhase.VERIFICATION or self.gate_outcome is not GateOutcome.HELD:
            raise GuardBlocked("manual release requires a HELD gate")
        self._emit(EventType.OVERRIDE_ACTION, tick=tick,
                   payload={"adjudicator": adjudicator, "action": "release"})
        return self._release_output(tick)

    def veto_output(self, adjudicator: str, tick: int = 0) -> GateOutcome:
        """Adjudicator veto: the output is never released."""
        if self.state is not MissionPhase.VERIFICATION:
            raise GuardBlocked("veto requires the mission in VERIFICATION")
        self.gate_outcome = GateOutcome.VETOED
        self._emit(EventType.OUTPUT_VETOED, tick=tick,
                   payload={"adjudicator": adjudicator})
        self._set_mission(MissionPhase.FAILED, tick)
        self._assert_invariants()
        return GateOutcome.VETOED

    # -- refinement ------------------------------------------------------------

    def refine(self, signal: FaultSignal, tick: int = 0) -> RefinementAction:
        """Classify a fault and start the matching re-legislation."""
        if self.state not in (
            MissionPhase.ACTIVE,
            MissionPhase.EXECUTING,
            MissionPhase.VERIFICATION,
            MissionPhase.FAILED,
        ):
            raise GuardBlocked(f"cannot refine a {self.state.name} mission")
        category = classify_fault(signal)
        if self.refinement_iterations >= MAX_REFINEMENT_ITERATIONS:
            self._emit(EventType.MAX_REFINEMENT_EXCEEDED, tick=tick,
                       payload={"iterations": self.refinement_iterations})
            self.abort("max_refinement_exhausted", tick)
            return RefinementAction("abort", category, signal.node_id)
        self.refinement_iterations += 1
        self.epoch += 1
        if category == LEGISLATIVE_SPECIFICATION_FAULT:
            self._emit(EventType.FULL_RELEGISLATION_INITIATED, tick=tick,
                       payload={"fault": signal.fault_type,
                                "iteration": self.refinement_iterations})
            for node_id, phase in list(self.node_states.items()):
                if phase in (NodePhase.ELIGIBLE, NodePhase.EXECUTING):
                    self._set_node(node_id, NodePhase.WAITING, tick)
                    self.node_deadline.pop(node_id, None)
            if self.state is not MissionPhase.ACTIVE:
                self._set_mission(MissionPhase.ACTIVE, tick)
            self._assert_invariants()
            return RefinementAction("full", category, signal.node_id)
        if category == AGENT_BEHAVIORAL_FAULT and signal.fault_type == "POP_REJECTED":
            self._adjust_reputation(signal.agent_id, -SLASH_NODE_FAILURE,
                                    "behavioral fault", tick)
        self._emit(EventType.PARTIAL_RELEGISLATION_INITIATED, tick=tick,
                   node_id=signal.node_id,
                   payload={"fault": signal.fault_type, "category": category,
                            "iteration": self.refinement_iterations})
        if self.node_states[signal.node_id] is NodePhase.FAILED:
            self._set_node(signal.node_id, NodePhase.WAITING, tick)
            self.mirror.clear(self.mission_id, signal.node_id)
        for successor in self.spec.successors(signal.node_id):
            if self.node_states[successor] in (NodePhase.ELIGIBLE, NodePhase.EXECUTING):
                self._set_node(successor, NodePhase.WAITING, tick)
                self.node_deadline.pop(successor, None)
        self._assert_invariants()
        return RefinementAction("partial", category, signal.node_id)

    def apply_reassignment(self, node_id: str, agent_id: str,
                           service_id: Optional[str] = None, tick: int = 0) -> NodePhase:
        """Install the re-bid winner on a node awaiting reassignment."""
        phase = self.node_states[node_id]
        if phase is NodePhase.FAILED:
            self._set_node(node_id, NodePhase.WAITING, tick)
            phase = NodePhase.WAITING
        if phase is not NodePhase.WAITING:
            raise GuardBlocked(f"node {node_id} is {phase.name}, cannot reassign")
        if service_id is not None:
            if self.registry is not None:
                record = self.registry.services.get(service_id)
                if record is None:
                    raise GuardBlocked(f"service {service_id} not registered")
                if record.deprecated:
                    raise ServiceDeprecated(service_id)
                self.registry.verify_code_hash(service_id, record.code_hash, tick,
                                               self.mission_id, node_id)
            self.service_overrides[node_id] = service_id
        self.assignment[node_id] = agent_id
        self.mirror.clear(self.mission_id, node_id)
        self.proofs.pop(node_id, None)
        self.node_deadline.pop(node_id, None)
        self.review_deadline.pop(node_id, None)
        self.review_round.pop(node_id, None)
        self._emit(EventType.NODE_REASSIGNED, node_id=node_id, tick=tick,
                   payload={"agent": agent_id,
                            "service": self.effective_service(node_id)},
                   entity=agent_id)
        if all(
            self.node_states[p] is NodePhase.COMPLETED
            for p in self.spec.predecessors(node_id)
        ):
            self._set_node(node_id, NodePhase.ELIGIBLE, tick, EventType.NODE_ELIGIBLE)
        self._assert_invariants()
        return self.node_states[node_id]

    # -- degraded mode -----------------------------------------------------------

    def poll_sequencer(self, tick: int) -> MissionPhase:
        """Watch for injected sequencer outages and the abort deadline."""
        outage = self.faults.outage_at(tick)
        if (
            self.state is MissionPhase.EXECUTING
            and outage is not None
            and tick - outage[0] > DEGRADED_OUTAGE_THRESHOLD
        ):
            self.enter_degraded(tick)
        if (
            self.state is MissionPhase.DEGRADED
            and self.degraded_since is not None
            and tick - self.degraded_since >= DEGRADED_ABORT_TIMEOUT
        ):
            self.abort("degraded_adjudicator_timeout", tick)
        return self.state

    def enter_degraded(self, tick: int) -> None:
        self._emit(EventType.DEGRADED_MODE_ENTERED, tick=tick)
        self._set_mission(MissionPhase.DEGRADED, tick)
        self.degraded_since = tick

    def exit_degraded(self, tick: int, authorized_by: str = "") -> None:
        """Adjudicator-authorized recovery; queued records replay in order."""
        if self.state is not MissionPhase.DEGRADED:
            raise GuardBlocked("mission is not in DEGRADED mode")
        if not authorized_by:
            raise GuardBlocked("degraded-mode exit requires adjudicator authorization")
        self._set_mission(MissionPhase.EXECUTING, tick,
                          EventType.DEGRADED_MODE_EXITED,
                          payload={"authorized_by": authorized_by})
        queued, self._degraded_queue = self._degraded_queue, []
        for event_type, kwargs in queued:
            self.log.append(event_type, **kwargs)
        self.degraded_since = None
        self._assert_invariants()

    # -- abort -------------------------------------------------------------------

    def abort(self, reason: str, tick: int = 0) -> None:
        """Terminal abort; legal from any non-terminal mission state."""
        if self.state in (MissionPhase.COMPLETED, MissionPhase.ABORTED):
            raise GuardBlocked(f"mission already terminal ({self.state.name})")
        self.state = MissionPhase.ABORTED
        self.abort_reason = reason
        self._emit(EventType.MISSION_ABORTED, tick=tick, payload={"reason": reason})
        self._assert_invariants()

    # -- reconciliation ------------------------------------------------------------

    def reconcile(self, phase: str, tick: int = 0,
                  offchain: Optional[Mapping[str, Tuple[str, int]]] = None,
                  onchain: Optional[Mapping[str, Tuple[str, int]]] = None) -> ReconcileReport:
        """Cross-check the off-chain record against the ledger view.

        Any divergence suspends the mission; a slow finalization gap is a
        warning only.
        """
        off = dict(self.offchain_completions if offchain is None else offchain)
        on = dict(self.onchain_completions if onchain is None else onchain)
        divergences: List[str] = []
        warnings: List[str] = []
        for node_id, (digest, seen_at) in off.items():
            if node_id not in on:
                divergences.append(f"{node_id}: off-chain complete, on-chain absent")
                continue
            confirmed_digest, confirmed_at = on[node_id]
            if confirmed_digest != digest:
                divergences.append(f"{node_id}: output hash mismatch")
            elif confirmed_at - seen_at > OPTIMISTIC_WINDOW_MAX:
                gap = confirmed_at - seen_at
                warnings.append(f"{node_id}: finalization gap {gap} ticks")
                self._emit(EventType.WARNING_SLOW_FINALIZATION, node_id=node_id,
                           tick=tick, payload={"gap": gap})
        for node_id in on:
            if node_id not in off:
                divergences.append(
                    f"{node_id}: on-chain transition without off-chain record"
                )
        for node_id, record in self.proofs.items():
            if node_id in self.nodes and record.tier != self.nodes[node_id].pop_tier:
                divergences.append(f"{node_id}: PoP tier mismatch")
        if divergences:
            self.suspended = True
            for divergence in divergences:
                self._emit(EventType.DIVERGENCE_DETECTED, tick=tick,
                           payload={"phase": phase, "divergence": divergence})
            self._emit(EventType.RECONCILIATION_FAILED, tick=tick,
                       payload={"phase": phase, "count": len(divergences)})
        else:
            self._emit(EventType.RECONCILIATION_PASSED, tick=tick,
                       payload={"phase": phase})
        return ReconcileReport(phase, not divergences,
                               tuple(divergences), tuple(warnings))

    # -- safety predicates -----------------------------------------------------------

    def check_invariants(self) -> List[str]:
        """Evaluate the five safety predicates; returns violations."""
        violations: List[str] = []
        if self.released:
            if self.gate_outcome is not GateOutcome.RELEASED:
                violations.append("gate-release: output released without gate release")
            if any(p is not NodePhase.COMPLETED for p in self.node_states.values()):
                violations.append("gate-release: output released with incomplete nodes")
        for edge in self.spec.edges:
            downstream = self.node_states.get(edge.to_node)
            upstream = self.node_states.get(edge.from_node)
            if downstream in _BEYOND_WAITING and upstream is not NodePhase.COMPLETED:
                violations.append(
                    f"dag-ordering: {edge.to_node} advanced before {edge.from_node} completed"
                )
        for node_id in self.escrow:
            if self.node_states[node_id] is not NodePhase.PENDING_FINALIZATION:
                violations.append(
                    f"escrow-release: buffered output outside PENDING_FINALIZATION on {node_id}"
                )
            if node_id in self.onchain_completions:
                violations.append(
                    f"escrow-release: buffered output already confirmed for {node_id}"
                )
        for mission_id, node_id in self.mirror.active:
            if mission_id != self.mission_id:
                continue
            if self.node_states.get(node_id) not in (NodePhase.FROZEN, NodePhase.FAILED):
                violations.append(
                    f"freeze-precedence: mirror active for non-frozen node {node_id}"
                )
        for node_id, phase in self.node_states.items():
            if phase is NodePhase.COMPLETED:
                record = self.proofs.get(node_id)
                if record is None or record.status is not PopResult.APPROVED:
                    violations.append(
                        f"pop-coverage: {node_id} completed without approved proof"
                    )
        return violations

    def _assert_invariants(self) -> None:
        violations = self.check_invariants()
        if violations:
            raise InvariantViolation("; ".join(violations))


# ---------------------------------------------------------------------------
# Deployment
# ---------------------------------------------------------------------------


def deploy_dag_batched(
    spec: DagSpec,
    assignment: Mapping[str, str],
    max_nodes_per_tranche: int = 500,
    tranche_failures: Optional[Mapping[int, int]] = None,
    **mission_kwargs,
) -> Mission:
    """Commit the DAG tranche by tranche and finalize deployment.

    An injected tranche failure is retried at the same index until it
    commits; edges may only reference nodes already deployed or in the
    same tranche, enforced against the topological order.
    """
    order = spec.topological_order()
    if order is None:
        raise TrancheFailure("cannot deploy a cyclic DAG")
    mission = Mission(spec, assignment, **mission_kwargs)
    remaining: Dict[int, int] = dict(tranche_failures or {})
    tranches = [
        order[i : i + max_nodes_per_tranche]
        for i in range(0, len(order), max_nodes_per_tranche)
    ]
    deployed: Set[str] = set()
    for index, tranche in enumerate(tranches):
        visible = deployed | set(tranche)
        for edge in spec.edges:
            if edge.to_node in tranche and edge.from_node not in visible:
                raise TrancheFailure(
                    f"tranche {index} edge {edge.from_node}->{edge.to_node} "
                    "references an undeployed node"
                )
        attempts = 1
        while remaining.get(index, 0) > 0:
            remaining[index] -= 1
            attempts += 1
        mission.deploy_log.append((index, len(tranche), attempts))
        mission._emit(
            EventType.DEPLOY_TRANCHE_COMMITTED,
            payload={"tranche": index, "nodes": len(tranche), "attempts": attempts},
        )
        deployed.update(tranche)
    if len(deployed) != len(spec.nodes):
        raise TrancheFailure("deployed node count does not match the DAG")
    mission.deployment_complete = True
    return mission


def launch_mission(spec: DagSpec, assignment: Mapping[str, str],
                   tick: int = 0, **mission_kwargs) -> Mission:
    """Deploy, activate, and begin executing in one step."""
    mission = deploy_dag_batched(spec, assignment, **mission_kwargs)
    mission.activate(tick)
    mission.begin_execution(tick)
    return mission

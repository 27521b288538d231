"""In-memory single-writer ledger.

Emulates the four on-chain registries (agents, management envelopes,
services, and the collaboration shell's bookkeeping) plus the
append-only event log that every other module writes through. Time is
logical: one tick is one millisecond of protocol time, supplied by the
caller. Gas numbers are advisory bookkeeping attached to events, never
a guard.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple


class LedgerError(Exception):
    """Base class for ledger rule violations."""


class DuplicateRegistration(LedgerError):
    pass


class InsufficientStake(LedgerError):
    pass


class BannedAgent(LedgerError):
    pass


class MalformedDid(LedgerError):
    pass


class ActiveMission(LedgerError):
    pass


class NotRegistered(LedgerError):
    pass


class Unauthorized(LedgerError):
    pass


class UnknownAgent(LedgerError):
    pass


class InactiveProfile(LedgerError):
    pass


class AgentType(Enum):
    PRODUCER = auto()
    MANAGEMENT = auto()
    MONITOR = auto()


class ManagementRole(Enum):
    REGISTRY = auto()
    LEGISLATIVE = auto()
    REGULATORY = auto()
    CODIFICATION = auto()


class EventType(Enum):
    # registration
    AGENT_REGISTERED = auto()
    SERVICE_REGISTERED = auto()
    AGENT_BANNED = auto()
    # legislative
    SESSION_INITIATED = auto()
    IDENTITY_VERIFIED = auto()
    DAG_PROPOSED = auto()
    BID_SUBMITTED = auto()
    BID_APPROVED = auto()
    BID_REJECTED = auto()
    REGULATORY_SIGNED = auto()
    CODIFICATION_COMPILED = auto()
    LEGISLATIVE_APPROVED = auto()
    DAG_DEPLOYED = auto()
    # execution
    TASK_ROUTED = auto()
    TASK_EXECUTING = auto()
    TASK_COMPLETED = auto()
    TASK_FAILED = auto()
    TASK_TIMEOUT = auto()
    CODEHASH_MISMATCH = auto()
    CODEHASH_VERIFIED = auto()
    # verification
    POP_SUBMITTED = auto()
    POP_APPROVED = auto()
    POP_REJECTED = auto()
    DELEGATED_REVIEW_REQUESTED = auto()
    DELEGATED_APPROVED = auto()
    DELEGATED_REJECTED = auto()
    # guardian
    ANOMALY_REPORTED = auto()
    FREEZE_TRIGGERED = auto()
    UNFREEZE_APPROVED = auto()
    FALSE_POSITIVE_CLASSIFIED = auto()
    EMERGENCY_STOP = auto()
    EMERGENCY_STOP_CLEARED = auto()
    # consistency
    PENDING_FINALIZATION = auto()
    ESCROW_RELEASED = auto()
    DEGRADED_MODE_ENTERED = auto()
    DEGRADED_MODE_EXITED = auto()
    RECONCILIATION_PASSED = auto()
    RECONCILIATION_FAILED = auto()
    DIVERGENCE_DETECTED = auto()
    # refinement
    FAULT_SIGNAL = auto()
    PARTIAL_RELEGISLATION_INITIATED = auto()
    FULL_RELEGISLATION_INITIATED = auto()
    MAX_REFINEMENT_EXCEEDED = auto()
    # output
    OUTPUT_RELEASED = auto()
    OUTPUT_VETOED = auto()
    MISSION_COMPLETED = auto()
    MISSION_ABORTED = auto()
    # adjudication
    PARAMETER_UPDATED = auto()
    OVERRIDE_ACTION = auto()
    UNILATERAL_OVERRIDE = auto()
    REPUTATION_ADJUSTED = auto()
    STAKE_SLASHED = auto()
    # operational extensions (deregistration, money movement, watchdog)
    AGENT_DEREGISTERED = auto()
    SERVICE_DEPRECATED = auto()
    MANAGEMENT_PROFILE_BOUND = auto()
    OPERATION_VALIDATED = auto()
    TRANSFER = auto()
    STAKE_LOCKED = auto()
    STAKE_REFUNDED = auto()
    ESCROW_DEPOSITED = auto()
    BUDGET_ALLOCATED = auto()
    REWARD_SETTLED = auto()
    TREASURY_UNDERFLOW = auto()
    STAKE_POOLED = auto()
    STAKE_WITHDRAWN = auto()
    INSURANCE_CLAIMED = auto()
    TREASURY_DISBURSED = auto()
    SNAPSHOT_SEALED = auto()
    NODE_ELIGIBLE = auto()
    NODE_REASSIGNED = auto()
    WARNING_SLOW_FINALIZATION = auto()
    FINALIZATION_FAILED = auto()
    DEPLOY_TRANCHE_COMMITTED = auto()
    WATCHDOG_ALERT = auto()
    WATCHDOG_FREEZE = auto()
    IMPEACHMENT_RESOLVED = auto()


# Events that represent an outbound value transfer. Checks-effects-
# interactions ordering means these must come last within an operation.
TRANSFER_EVENTS = frozenset({EventType.TRANSFER})

_EXPORT_FIELDS = (
    "event_id",
    "mission_id",
    "epoch",
    "event_type",
    "emitter",
    "primary_entity",
    "secondary_entity",
    "node_id",
    "payload_hash",
    "seq",
    "tick",
    "gas_used",
    "payload",
)


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class EventRecord:
    """One audit event: the sole cross-module observability channel."""

    event_id: str
    mission_id: Optional[str]
    epoch: int
    event_type: EventType
    emitter: str
    primary_entity: Optional[str]
    secondary_entity: Optional[str]
    node_id: Optional[str]
    payload_hash: str
    seq: int
    tick: int
    gas_used: int
    payload: dict

    def content_hash(self) -> str:
        """Digest over the event's identity and payload, used by commits."""
        blob = f"{self.seq}|{self.event_type.name}|{self.payload_hash}|{self.tick}"
        return _digest(blob.encode())

    def to_line(self) -> str:
        row = {}
        for name in _EXPORT_FIELDS:
            value = getattr(self, name)
            row[name] = value.name if isinstance(value, EventType) else value
        return json.dumps(row, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "EventRecord":
        row = json.loads(line)
        row["event_type"] = EventType[row["event_type"]]
        return cls(**row)


class EventLog:
    """Append-only, globally sequenced event store."""

    def __init__(self) -> None:
        self.events: List[EventRecord] = []
        self._next_seq = 0

    def append(
        self,
        event_type: EventType,
        emitter: str,
        payload: Optional[dict] = None,
        mission_id: Optional[str] = None,
        epoch: int = 0,
        primary_entity: Optional[str] = None,
        secondary_entity: Optional[str] = None,
        node_id: Optional[str] = None,
        tick: int = 0,
        gas_used: int = 0,
    ) -> EventRecord:
        payload = payload or {}
        payload_hash = _digest(_canonical(payload).encode())
        seq = self._next_seq
        event_id = _digest(
            f"{seq}|{event_type.name}|{payload_hash}|{tick}".encode()
        )
        record = EventRecord(
            event_id=event_id,
            mission_id=mission_id,
            epoch=epoch,
            event_type=event_type,
            emitter=emitter,
            primary_entity=primary_entity,
            secondary_entity=secondary_entity,
            node_id=node_id,
            payload_hash=payload_hash,
            seq=seq,
            tick=tick,
            gas_used=gas_used,
            payload=payload,
        )
        self.events.append(record)
        self._next_seq += 1
        return record

    def __len__(self) -> int:
        return len(self.events)

    def for_mission(self, mission_id: str) -> List[EventRecord]:
        return [e for e in self.events if e.mission_id == mission_id]

    def for_node(self, node_id: str) -> List[EventRecord]:
        return [e for e in self.events if e.node_id == node_id]

    def export_lines(self) -> List[str]:
        return [e.to_line() for e in self.events]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        log = cls()
        for line in lines:
            line = line.strip()
            if not line:
                continue
            record = EventRecord.from_line(line)
            log.events.append(record)
            log._next_seq = record.seq + 1
        return log


def merkle_root(events: Sequence[EventRecord]) -> str:
    """Merkle root over event hashes: binary tree, duplicate-last padding."""
    if not events:
        return _digest(b"")
    level = [e.content_hash() for e in events]
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [
            _digest((level[i] + level[i + 1]).encode())
            for i in range(0, len(level), 2)
        ]
    return level[0]


# ---------------------------------------------------------------------------
# Gas model


@dataclass(frozen=True)
class GasModel:
    cold_sstore: int = 20_000
    warm_sstore: int = 2_900
    delete_refund: int = 5_000
    cold_sload: int = 2_100
    call_base: int = 2_500
    transfer: int = 21_000


GAS = GasModel()

Primitive = Tuple[str, ...]


def estimate_gas(
    op_trace: Sequence[Primitive],
    model: GasModel = GAS,
    warm_slots: Iterable[str] = (),
) -> int:
    """Price a trace of storage/call primitives.

    Primitives: ("sstore", slot), ("sload", slot), ("delete", slot),
    ("call",), ("transfer",), ("overhead", amount). The first write to
    a slot within the trace is cold; later writes to it are warm.
    ``warm_slots`` names slots already written before the trace starts.
    """
    if not op_trace:
        raise ValueError("empty op trace")
    total = 0
    written: Set[str] = set(warm_slots)
    for primitive in op_trace:
        kind = primitive[0]
        if kind == "sstore":
            slot = primitive[1]
            total += model.warm_sstore if slot in written else model.cold_sstore
            written.add(slot)
        elif kind == "sload":
            total += model.cold_sload
        elif kind == "delete":
            total += model.delete_refund
        elif kind == "call":
            total += model.call_base
        elif kind == "transfer":
            total += model.transfer
        elif kind == "overhead":
            total += int(primitive[1])
        else:
            raise ValueError(f"unknown gas primitive {kind!r}")
    return total


REGISTER_AGENT_TRACE: Tuple[Primitive, ...] = (
    ("sstore", "agent.did"),
    ("sstore", "agent.principal"),
    ("sstore", "agent.reputation"),
    ("sstore", "agent.stake"),
    ("overhead", 8_500),  # calldata and ABI dispatch
)

REGISTER_SERVICE_TRACE: Tuple[Primitive, ...] = (
    ("sstore", "service.code_hash"),
    ("sstore", "service.schema"),
    ("overhead", 8_000),
)

VERIFY_CODE_HASH_TRACE: Tuple[Primitive, ...] = (("sload", "service.code_hash"),)

DEREGISTER_TRACE: Tuple[Primitive, ...] = (
    ("delete", "agent.record"),
    ("delete", "agent.stake"),
    ("transfer",),
)


# ---------------------------------------------------------------------------
# Records


@dataclass
class AgentRecord:
    agent_id: str
    did: str
    human_principal: str
    agent_type: AgentType
    registered_at: int
    mission_count: int = 0
    reputation: int = 500
    banned: bool = False
    registration_stake: int = 0


@dataclass
class ManagementProfile:
    agent_id: str
    role: ManagementRole
    permitted_ops: Set[str]
    prohibited_ops: Set[str]
    delegation_mandates: List[Tuple[str, str, bool]] = field(default_factory=list)
    active: bool = True


@dataclass
class ServiceRecord:
    service_id: str
    code_hash: str
    api_schema_hash: str
    endpoint: str
    constraints: Tuple[int, int, int]  # max latency ms, max memory mb, max concurrent
    owner: str
    deprecated: bool = False


ZERO_HASH = "0" * 64

AUTHORIZED_REPUTATION_UPDATERS = frozenset({"regulatory", "execution", "adjudication"})


class Ledger:
    """Agent, management, and service registries over one event log."""

    def __init__(
        self,
        log: Optional[EventLog] = None,
        registration_stake: int = 1_000,
    ) -> None:
        self.log = log if log is not None else EventLog()
        self.registration_stake = registration_stake
        self.agents: Dict[str, AgentRecord] = {}
        self.services: Dict[str, ServiceRecord] = {}
        self.profiles: Dict[str, ManagementProfile] = {}
        self._did_index: Dict[str, str] = {}
        self._banned_dids: Set[str] = set()
        self._active_nodes: Dict[str, Set[str]] = {}
        self._next_agent = 0

    # -- agent registry ----------------------------------------------------

    def register_agent(
        self,
        did: str,
        principal: str,
        agent_type: AgentType,
        stake: int,
        tick: int = 0,
    ) -> str:
        if not did or not did.startswith("did:"):
            raise MalformedDid(f"not a did: {did!r}")
        if not principal:
            raise MalformedDid("agent must bind a human principal")
        if did in self._banned_dids:
            raise BannedAgent(did)
        if did in self._did_index:
            raise DuplicateRegistration(did)
        if stake < self.registration_stake:
            raise InsufficientStake(
                f"stake {stake} below registration stake {self.registration_stake}"
            )
        agent_id = f"A{self._next_agent:04d}"
        self._next_agent += 1
        record = AgentRecord(
            agent_id=agent_id,
            did=did,
            human_principal=principal,
            agent_type=agent_type,
            registered_at=tick,
            reputation=500,
            registration_stake=stake,
        )
        self.agents[agent_id] = record
        self._did_index[did] = agent_id
        self.log.append(
            EventType.AGENT_REGISTERED,
            emitter="ledger",
            primary_entity=agent_id,
            secondary_entity=principal,
            tick=tick,
            gas_used=estimate_gas(REGISTER_AGENT_TRACE),
            payload={
                "agent_id": agent_id,
                "did": did,
                "principal": principal,
                "agent_type": agent_type.name,
                "stake": stake,
                "reputation": 500,
            },
        )
        return agent_id

    def deregister_agent(self, agent_id: str, tick: int = 0) -> int:
        record = self.agents.get(agent_id)
        if record is None:
            raise NotRegistered(agent_id)
        if self._active_nodes.get(agent_id):
            raise ActiveMission(
                f"{agent_id} active on {sorted(self._active_nodes[agent_id])}"
            )
        refund = record.registration_stake
        # State mutations first, transfer event last (CEI ordering is
        # observable in the log).
        del self.agents[agent_id]
        del self._did_index[record.did]
        self.profiles.pop(agent_id, None)
        self.log.append(
            EventType.AGENT_DEREGISTERED,
            emitter="ledger",
            primary_entity=agent_id,
            tick=tick,
            gas_used=estimate_gas(DEREGISTER_TRACE),
            payload={"agent_id": agent_id, "did": record.did},
        )
        self.log.append(
            EventType.TRANSFER,
            emitter="ledger",
            primary_entity=agent_id,
            tick=tick,
            payload={"to": agent_id, "amount": refund, "kind": "stake_refund"},
        )
        return refund

    def update_reputation(
        self, agent_id: str, delta: int, rationale: str, caller: str, tick: int = 0
    ) -> int:
        if caller not in AUTHORIZED_REPUTATION_UPDATERS:
            raise Unauthorized(f"{caller!r} may not adjust reputation")
        record = self.agents.get(agent_id)
        if record is None:
            raise UnknownAgent(agent_id)
        old = record.reputation
        record.reputation = max(0, min(1000, old + delta))
        self.log.append(
            EventType.REPUTATION_ADJUSTED,
            emitter="ledger",
            primary_entity=agent_id,
            tick=tick,
            payload={
                "agent_id": agent_id,
                "old": old,
                "new": record.reputation,
                "rationale": rationale,
                "caller": caller,
            },
        )
        return record.reputation

    def ban_agent(self, agent_id: str, reason: str, tick: int = 0) -> None:
        record = self.agents.get(agent_id)
        if record is None:
            raise UnknownAgent(agent_id)
        record.banned = True
        self._banned_dids.add(record.did)
        self.log.append(
            EventType.AGENT_BANNED,
            emitter="ledger",
            primary_entity=agent_id,
            tick=tick,
            payload={"agent_id": agent_id, "did": record.did, "reason": reason},
        )

    def reputation_of(self, agent_id: str) -> int:
        record = self.agents.get(agent_id)
        if record is None:
            raise UnknownAgent(agent_id)
        return record.reputation

    # Mission participation guard used by deregistration.

    def mark_active(self, agent_id: str, node_id: str) -> None:
        self._active_nodes.setdefault(agent_id, set()).add(node_id)

    def clear_active(self, agent_id: str, node_id: str) -> None:
        nodes = self._active_nodes.get(agent_id)
        if nodes:
            nodes.discard(node_id)

    # -- management envelopes ----------------------------------------------

    def bind_management_profile(
        self,
        agent_id: str,
        role: ManagementRole,
        permitted_ops: Iterable[str],
        prohibited_ops: Iterable[str] = (),
        delegation_mandates: Optional[List[Tuple[str, str, bool]]] = None,
        tick: int = 0,
    ) -> ManagementProfile:
        if agent_id not in self.agents:
            raise UnknownAgent(agent_id)
        permitted = set(permitted_ops)
        prohibited = set(prohibited_ops)
        if not permitted:
            raise ValueError("management profile needs at least one permitted op")
        if permitted & prohibited:
            raise ValueError("permitted and prohibited ops overlap")
        for _, service_id, _ in delegation_mandates or []:
            service = self.services.get(service_id)
            if service is None or service.deprecated:
                raise ValueError(f"mandated service {service_id} unavailable")
        profile = ManagementProfile(
            agent_id=agent_id,
            role=role,
            permitted_ops=permitted,
            prohibited_ops=prohibited,
            delegation_mandates=list(delegation_mandates or []),
        )
        self.profiles[agent_id] = profile
        self.log.append(
            EventType.MANAGEMENT_PROFILE_BOUND,
            emitter="ledger",
            primary_entity=agent_id,
            tick=tick,
            payload={
                "agent_id": agent_id,
                "role": role.name,
                "permitted": sorted(permitted),
                "prohibited": sorted(prohibited),
            },
        )
        return profile

    def validate_management_operation(
        self, agent_id: str, selector: str, tick: int = 0
    ) -> bool:
        profile = self.profiles.get(agent_id)
        if profile is None or not profile.active:
            raise InactiveProfile(agent_id)
        allowed = selector in profile.permitted_ops and selector not in profile.prohibited_ops
        if allowed:
            self.log.append(
                EventType.OPERATION_VALIDATED,
                emitter="ledger",
                primary_entity=agent_id,
                tick=tick,
                payload={"agent_id": agent_id, "selector": selector},
            )
        return allowed

    def revoke_management_profile(self, agent_id: str) -> None:
        profile = self.profiles.get(agent_id)
        if profile is not None:
            profile.active = False

    # -- service registry ---------------------------------------------------

    def register_service(
        self,
        service_id: str,
        code_hash: str,
        api_schema_hash: str,
        endpoint: str,
        constraints: Tuple[int, int, int],
        owner: str,
        tick: int = 0,
    ) -> ServiceRecord:
        if code_hash == ZERO_HASH or not code_hash:
            raise ValueError("service code hash must be nonzero")
        if owner not in self.agents:
            raise UnknownAgent(owner)
        if service_id in self.services:
            raise DuplicateRegistration(service_id)
        record = ServiceRecord(
            service_id=service_id,
            code_hash=code_hash,
            api_schema_hash=api_schema_hash,
            endpoint=endpoint,
            constraints=constraints,
            owner=owner,
        )
        self.services[service_id] = record
        self.log.append(
            EventType.SERVICE_REGISTERED,
            emitter="ledger",
            primary_entity=service_id,
            secondary_entity=owner,
            tick=tick,
            gas_used=estimate_gas(REGISTER_SERVICE_TRACE),
            payload={
                "service_id": service_id,
                "code_hash": code_hash,
                "api_schema_hash": api_schema_hash,
                "endpoint": endpoint,
                "constraints": list(constraints),
                "owner": owner,
            },
        )
        return record

    def deprecate_service(self, service_id: str, tick: int = 0) -> None:
        record = self.services.get(service_id)
        if record is None:
            raise KeyError(service_id)
        record.deprecated = True
        self.log.append(
            EventType.SERVICE_DEPRECATED,
            emitter="ledger",
            primary_entity=service_id,
            tick=tick,
            payload={"service_id": service_id},
        )

    def verify_code_hash(
        self, service_id: str, claimed_hash: str, tick: int = 0,
        mission_id: Optional[str] = None, node_id: Optional[str] = None,
    ) -> bool:
        record = self.services.get(service_id)
        if record is None:
            raise KeyError(service_id)
        matches = record.code_hash == claimed_hash
        self.log.append(
            EventType.CODEHASH_VERIFIED if matches else EventType.CODEHASH_MISMATCH,
            emitter="ledger",
            primary_entity=service_id,
            mission_id=mission_id,
            node_id=node_id,
            tick=tick,
            gas_used=estimate_gas(VERIFY_CODE_HASH_TRACE),
            payload={
                "service_id": service_id,
                "claimed": claimed_hash,
                "anchored": record.code_hash,
                "match": matches,
            },
        )
        return matches

    # -- snapshots and replay -----------------------------------------------

    def snapshot(self) -> dict:
        return {
            "agents": {
                aid: {
                    "did": a.did,
                    "principal": a.human_principal,
                    "agent_type": a.agent_type.name,
                    "reputation": a.reputation,
                    "banned": a.banned,
                    "stake": a.registration_stake,
                }
                for aid, a in sorted(self.agents.items())
            },
            "banned_dids": sorted(self._banned_dids),
            "services": {
                sid: {
                    "code_hash": s.code_hash,
                    "deprecated": s.deprecated,
                    "owner": s.owner,
                }
                for sid, s in sorted(self.services.items())
            },
            "profiles": {
                aid: {
                    "role": p.role.name,
                    "permitted": sorted(p.permitted_ops),
                    "prohibited": sorted(p.prohibited_ops),
                    "active": p.active,
                }
                for aid, p in sorted(self.profiles.items())
            },
        }

    def state_hash(self) -> str:
        return _digest(_canonical(self.snapshot()).encode())

    @classmethod
    def replay(cls, events: Iterable[EventRecord]) -> "Ledger":
        """Rebuild registry state from an event stream."""
        ledger = cls(log=EventLog())
        for event in events:
            p = event.payload
            t = event.event_type
            if t is EventType.AGENT_REGISTERED:
                record = AgentRecord(
                    agent_id=p["agent_id"],
                    did=p["did"],
                    human_principal=p["principal"],
                    agent_type=AgentType[p["agent_type"]],
                    registered_at=event.tick,
                    reputation=p["reputation"],
                    registration_stake=p["stake"],
                )
                ledger.agents[record.agent_id] = record
                ledger._did_index[record.did] = record.agent_id
                number = int(record.agent_id[1:])
                ledger._next_agent = max(ledger._next_agent, number + 1)
            elif t is EventType.AGENT_DEREGISTERED:
                record = ledger.agents.pop(p["agent_id"], None)
                if record is not None:
                    ledger._did_index.pop(record.did, None)
                    ledger.profiles.pop(p["agent_id"], None)
            elif t is EventType.REPUTATION_ADJUSTED:
                if p["agent_id"] in ledger.agents:
                    ledger.agents[p["agent_id"]].reputation = p["new"]
            elif t is EventType.AGENT_BANNED:
                if p["agent_id"] in ledger.agents:
                    ledger.agents[p["agent_id"]].banned = True
                ledger._banned_dids.add(p["did"])
            elif t is EventType.SERVICE_REGISTERED:
                ledger.services[p["service_id"]] = ServiceRecord(
                    service_id=p["service_id"],
                    code_hash=p["code_hash"],
                    api_schema_hash=p["api_schema_hash"],
                    endpoint=p["endpoint"],
                    constraints=tuple(p["constraints"]),
                    owner=p["owner"],
                )
            elif t is EventType.SERVICE_DEPRECATED:
                if p["service_id"] in ledger.services:
                    ledger.services[p["service_id"]].deprecated = True
            elif t is EventType.MANAGEMENT_PROFILE_BOUND:
                ledger.profiles[p["agent_id"]] = ManagementProfile(
                    agent_id=p["agent_id"],
                    role=ManagementRole[p["role"]],
                    permitted_ops=set(p["permitted"]),
                    prohibited_ops=set(p["prohibited"]),
                )
        return ledger

"""Round-driven world for the commons production economy.

The world wires the governance stack to a population of scripted
personas and runs it: legislative sessions at milestone boundaries,
competitive bidding, pipeline execution with tiered verification,
guardian anomaly reports, adjudication of queued alerts, settlement,
and a shared resource pool every task draws against. Nothing here
branches on wall clock or object identity; every random choice comes
from a named stream, so one (config, seed) pair maps to exactly one
event log.

Persona behavior is scripted, not learned. The behavioral layer the
scripts do carry: defection propensity drifts up while defections go
unanswered and cools after sanctions, and under prompt-only governance
a fixed compliance factor discounts defection but nothing blocks it.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .. import rng
from ..adjudication import (
    Adjudicator,
    AdjudicatorPool,
    AdjudicatorWatchdog,
    ReviewAlert,
    ReviewDecision,
    amendment_weakens,
    detect_coordination,
)
from ..economics import EconomyLedger, PriceExceedsBudget, bid_score, ema_update
from ..execution import (
    FreezeDecision,
    GuardBlocked,
    MissionPhase,
    NodePhase,
    PopResult,
    launch_mission,
    output_digest,
)
from ..ledger import AgentType, EventLog, EventType, Ledger
from ..legislature import (
    CodedContractSpecification,
    ConstitutionalParams,
    DagNode,
    DagProposal,
    DagSpec,
    EmptyBallotSet,
    IdentityAttestation,
    IdentityVerificationRequest,
    LegislativeApproval,
    LegislativeSession,
    LegislatureError,
    PreferenceRanking,
    RegulatoryDecision,
    TaskBid,
    advance_session,
    assignment_fairness,
    bidder_count,
    compile_dag,
    copeland_winner,
)
from .commons import CommonsPool
from .config import Configuration, ExperimentConfig
from .metrics import MetricFrame, normalized_hhi, ranking_distance, ratio
from .personas import (
    CAPABILITY_BETA,
    CAPABILITY_DIMENSIONS,
    COST_LOG_MEAN,
    COST_LOG_SIGMA,
    PERSONA_POLICIES,
    Persona,
    PersonaKind,
    export_population,
    generate_population,
)

__all__ = [
    "RunResult",
    "RulePackage",
    "ShockAlreadyApplied",
    "SimHarnessError",
    "SimTask",
    "World",
    "run_experiment",
]


class SimHarnessError(Exception):
    """Base class for harness rule violations."""


class ShockAlreadyApplied(SimHarnessError):
    pass


# One round models ten minutes of wall time. The guardian escalation
# window (default 1.2e6 ms) then spans two rounds and a delegated human
# review budget (3.6e6 ms) spans six.
TICKS_PER_ROUND = 600_000
NODE_TIMEOUT_MS = 600_000

TASK_TYPES = 10
# tier by position in each block of ten tasks: six hash-checked, three
# redundant-consensus, one human-delegated
TIER_PATTERN = (1, 1, 1, 1, 1, 1, 2, 2, 2, 3)
RISK_BY_TIER = {1: "LOW", 2: "MEDIUM", 3: "HIGH"}

MILESTONE_QUOTA = 0.8            # approved share for a completed milestone
MILESTONE_QUALITY_FLOOR = 0.55   # mean approved quality for completion
GATE_QUALITY_FLOOR = 0.30        # output predicate: reject junk deliverables
CAPABILITY_QUALITY_WEIGHT = 0.25

OBSERVE_DEFECTION = 0.85   # chance the guardian scores a real defection
BENIGN_FLAG = 0.02         # chance an honest execution still gets scored
DEFECT_Z = (3.6, 0.3)      # primary deviation score for real defections
DEFECT_Z2 = (3.4, 0.3)     # second scorer, drawn independently
BENIGN_Z = (1.7, 0.5)
BENIGN_Z2 = (1.4, 0.5)
CRITICAL_Z = 4.2           # deviation past this marks the alert critical

EMERGENT_COMPLIANCE = 0.3  # prompt-mode defection discount, nothing enforced
EMBOLDEN_GROWTH = 1.01     # per unanswered-defection round
SANCTION_COOLING = 0.97    # per round containing any sanction
PERSONAL_DETERRENCE = 0.5  # applied to the sanctioned agent directly
DEFECTION_CAP = 0.95

PETITION_SHARE = 0.2
PARTICIPATION_QUORUM = 0.6
CANDIDATE_COUNT = 20
ROGUE_PACKAGES = 3
INCUMBENT_BONUS = 0.15
ADJUDICATION_CAPACITY = 6  # alerts the panel clears per round
MAX_TASK_ATTEMPTS = 3
BLOC_MATCH_MIN = 3         # flagged-bloc overlap needed to call it detected

SHOCK_REMOVE = 20
SHOCK_FREE_RIDERS = 10
SHOCK_BLOC_SIZE = 5
SHOCK_BLOC_ID = "shock-bloc"

CONFIDENCE_FLOOR = 0.5           # ICT below this triggers a funding injection
CONFIDENCE_INJECTION = 10_000_000

SLASH_VERIFICATION_REJECTED = 100
REP_VERIFICATION_REJECTED = -60
REP_TASK_COMPLETED = 8
REP_BLOC_SANCTION = -200
REP_AUDIT_SANCTION = -150

_FOUNDATION = "did:h:foundation"

# constitutional knobs sessions may amend, with the validation ranges the
# policy check enforces; min_fairness_score and reputation_floor are
# deliberately absent (amending them is a separation-of-power violation)
_AMENDABLE_BOUNDS: Dict[str, Tuple[float, float]] = {
    "deviation_threshold_sigma": (1.0, 5.0),
    "max_tool_invocations": (5, 200),
    "max_message_volume": (10, 500),
    "escalation_freeze_count": (2, 10),
    "base_escalation_window_ms": (300_000, 2_400_000),
}


# -- rule packages ----------------------------------------------------------


@dataclass(frozen=True)
class RulePackage:
    """One ballot candidate: a single-parameter amendment, or the status quo."""

    package_id: str
    parameter: str = ""        # empty = incumbent rules, no change
    value: float = 0.0
    weakening: bool = False
    valid: bool = True         # ground truth; the policy check rediscovers it


def _package_valid(pkg: RulePackage) -> bool:
    """The deterministic policy check applied to a ballot winner."""
    if not pkg.parameter:
        return True
    bounds = _AMENDABLE_BOUNDS.get(pkg.parameter)
    if bounds is None:
        return False
    low, high = bounds
    return low <= pkg.value <= high


def build_rule_slate(params: ConstitutionalParams, stream) -> List[RulePackage]:
    """Twenty candidate packages: the incumbent, sixteen in-range
    single-parameter amendments, and three that should never survive
    the policy check (out-of-range or touching a protected knob)."""
    names = sorted(_AMENDABLE_BOUNDS)
    slate = [RulePackage("pkg-00")]
    for i in range(CANDIDATE_COUNT - 1 - ROGUE_PACKAGES):
        name = names[i % len(names)]
        low, high = _AMENDABLE_BOUNDS[name]
        span = high - low
        # keep proposals inside the middle of the lawful range so the
        # rogue packages are the only ones the validator rejects
        raw = low + span * (0.1 + 0.8 * float(stream.random()))
        old = getattr(params, name)
        value = float(raw) if isinstance(old, float) else float(int(round(raw)))
        slate.append(
            RulePackage(
                f"pkg-{i + 1:02d}",
                parameter=name,
                value=value,
                weakening=amendment_weakens(name, old, type(old)(value)),
            )
        )
    rogue = [
        RulePackage("pkg-17", "deviation_threshold_sigma", 9.0,
                    weakening=True, valid=False),
        RulePackage("pkg-18", "min_fairness_score", 300.0,
                    weakening=True, valid=False),
        RulePackage("pkg-19", "max_tool_invocations", 500.0,
                    weakening=True, valid=False),
    ]
    return slate + rogue


# -- bookkeeping records ------------------------------------------------------


@dataclass
class SimTask:
    milestone: int
    index: int
    task_id: str
    type_index: int
    tier: int
    difficulty: float
    round_due: int
    budget: int
    agent_id: str = ""
    attempts: int = 0
    executed: bool = False
    approved: bool = False
    failed: bool = False
    abandoned: bool = False
    defected: bool = False
    quality: float = 0.0
    price: int = 0

    @property
    def risk_tier(self) -> str:
        return RISK_BY_TIER[self.tier]

    @property
    def expected_output(self) -> str:
        return f"deliv-{self.task_id}"

    @property
    def expected_proof(self) -> str:
        return f"proof-{self.task_id}"


@dataclass
class MilestoneState:
    index: int
    tasks: List[SimTask]
    mission: object = None
    bids: Dict[str, List[Tuple[float, str, int]]] = field(default_factory=dict)
    closed: bool = False
    completed: bool = False
    audit_failed: bool = False
    skipped: bool = False    # session never deployed; tasks never ran


@dataclass
class SessionOutcome:
    session_id: str
    round_index: int
    kind: str                # "milestone", "petition", "deliberation"
    milestone: Optional[int]
    eligible: int
    casters: int
    quorum_retries: int = 0
    deployed: bool = False
    failed: bool = False
    winner: str = ""
    amendment: str = ""      # "param=value" when one was adopted
    rejected_winners: int = 0
    repaired: bool = False
    detected_blocs: Tuple[str, ...] = ()
    dsi: float = 0.0
    lpr: float = 0.0
    msr: float = 0.0


@dataclass
class RunResult:
    """Everything one run leaves behind, ready to serialize."""

    configuration: str
    seed: int
    frame: MetricFrame
    event_lines: Tuple[str, ...]
    log_hash: str
    population_export: str
    final_params: Dict[str, object]
    milestones: List[Dict[str, object]]
    sessions: List[Dict[str, object]]
    summary: Dict[str, object]

    def write(self, out_dir: str) -> Dict[str, str]:
        """Write metrics CSV, the event log, and the summary document."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "metrics": os.path.join(out_dir, "metrics.csv"),
            "events": os.path.join(out_dir, "events.log"),
            "summary": os.path.join(out_dir, "summary.md"),
            "population": os.path.join(out_dir, "population.json"),
        }
        with open(paths["metrics"], "w", encoding="utf-8") as fh:
            fh.write(self.frame.to_csv())
        with open(paths["events"], "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.event_lines))
            fh.write("\n")
        with open(paths["population"], "w", encoding="utf-8") as fh:
            fh.write(self.population_export)
        with open(paths["summary"], "w", encoding="utf-8") as fh:
            fh.write(self.to_markdown())
        return paths

    def to_markdown(self) -> str:
        last = self.summary
        lines = [
            f"# Run summary: {self.configuration}, seed {self.seed}",
            "",
            f"- rounds: {last['rounds']}",
            f"- final population: {last['population']}",
            f"- event log hash: `{self.log_hash}`",
            f"- commons pool at close: {last['pool_level']:.2f}"
            f" (depleted: {last['pool_depleted']})",
            f"- milestones completed: {last['milestones_completed']}"
            f"/{last['milestones_closed']}",
            f"- defection rate (mean per round): {last['mean_dr']:.4f}",
            f"- cooperation sustainability (final CSR): {last['csr']:.4f}",
            f"- pool sustainability (final PSR): {last['psr']:.4f}",
            f"- compliance rate (final): {last['ecp']:.4f}",
            f"- productivity vs random twin (final PvR): {last['pvr']:.4f}",
            f"- sanction rounds: {last['sanction_rounds']}",
            f"- treasury: {last['treasury']}",
            "",
            "## Sessions",
            "",
            "| round | kind | milestone | deployed | winner | amendment |"
            " LPR | DSI | blocs detected |",
            "|---|---|---|---|---|---|---|---|---|",
        ]
        for s in self.sessions:
            lines.append(
                "| {round} | {kind} | {milestone} | {deployed} | {winner} |"
                " {amendment} | {lpr:.2f} | {dsi:.3f} | {blocs} |".format(**s)
            )
        lines += ["", "## Milestones", "",
                  "| index | approved | tasks | mean quality | completed |"
                  " audit failed |",
                  "|---|---|---|---|---|---|"]
        for m in self.milestones:
            lines.append(
                "| {index} | {approved} | {tasks} | {mean_quality:.3f} |"
                " {completed} | {audit_failed} |".format(**m)
            )
        lines.append("")
        return "\n".join(lines)


# -- the world ----------------------------------------------------------------


class World:
    """One configuration, one seed, one population, one event log."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.seed = config.seed
        self.params = config.params
        self.stake_schedule = {"LOW": 150, "MEDIUM": 500, "HIGH": 2_000}

        self._streams = {
            name: rng.stream(config.seed, name)
            for name in ("tasks", "quality", "defect", "bids", "ballots",
                         "twin", "guardian", "shock", "commit")
        }

        self.log = EventLog()
        self.registry = Ledger(self.log)
        self.commons = CommonsPool(config.commons)
        self.personas: List[Persona] = generate_population(
            config.n, config.mix, config.seed, registry=self.registry
        )
        self._by_agent: Dict[str, Persona] = {
            p.agent_id: p for p in self.personas
        }

        self.economy: Optional[EconomyLedger] = None
        if config.has("economics"):
            self.economy = EconomyLedger(self.log, self.registry,
                                         alpha=config.alpha)
            self.economy.fund_treasury(config.initial_treasury, tick=0)

        self.pool: Optional[AdjudicatorPool] = None
        self.watchdog: Optional[AdjudicatorWatchdog] = None
        if config.has("adjudication"):
            members = [
                Adjudicator(f"adj-{i}", f"did:h:overseer-{i}")
                for i in range(7)
            ]
            self.pool = AdjudicatorPool(members, quorum=7, fault_tolerance=2,
                                        senior="adj-0", registry=self.registry,
                                        log=self.log)
            self.watchdog = AdjudicatorWatchdog(self.pool, log=self.log)
        self._adj_cursor = 0

        self.leg_agent = ""
        self.reg_agent = ""
        self.service_hash: Dict[int, str] = {}
        if config.has("legislature"):
            self._register_infrastructure()

        self._plan_tasks()

        # round-scoped and cumulative tallies
        self.frame = MetricFrame()
        self.round_index = -1
        self.shock_applied = False
        self.petitioners: Set[str] = set()
        self.known_blocs: Set[str] = set()
        self.detected_blocs: Set[str] = set()
        self.sessions: List[SessionOutcome] = []
        self.deferred: List[Tuple[int, int]] = []   # (milestone, task index)
        self.rebids: List[Tuple[int, int]] = []
        self.alert_queue: List[Dict[str, object]] = []
        self.opa_samples: List[int] = []
        self.ict = 1.0
        self.bloc_ranking: Tuple[str, ...] = ()

        self._assign_counts: Dict[str, List[int]] = {}
        self._cau_hits = 0
        self._cau_total = 0
        self._executions = 0
        self._defections_total = 0
        self._guard_flags = 0
        self._gate_vetoes = 0
        self._commit_first = 0
        self._failed_incidents = 0
        self._recovered = 0
        self._pvrr_rejected = 0
        self._pvrr_winners = 0
        self._cfr_clean = 0
        self._cfr_total = 0
        self._dvr_first = 0
        self._dvr_total = 0
        self._rec = 0
        self._governance_rounds = 0
        self._overdraw_rounds = 0
        self._pool_ok_rounds = 0
        self._sanction_rounds = 0
        self._rounds_done = 0
        self._main_quality_sum = 0.0
        self._main_quality_n = 0
        self._twin_quality_sum = 0.0
        self._twin_quality_n = 0
        self._last_lpr = 0.0
        self._last_dsi = 0.0
        self._last_msr = 0.0

        # per-round scratch, reset by run_round
        self._round_defects = 0
        self._round_execs = 0
        self._round_catches = 0
        self._round_sanctions = 0
        self._round_overdraw = False
        self._round_governance = False

    # -- setup -----------------------------------------------------------

    def _register_infrastructure(self) -> None:
        self.leg_agent = self.registry.register_agent(
            f"did:sop:sim-{self.seed}-legislator", "did:h:legislative-office",
            AgentType.MANAGEMENT, 1_000, tick=0)
        self.reg_agent = self.registry.register_agent(
            f"did:sop:sim-{self.seed}-regulator", "did:h:regulatory-office",
            AgentType.MANAGEMENT, 1_000, tick=0)
        marketplace = self.registry.register_agent(
            f"did:sop:sim-{self.seed}-marketplace", "did:h:marketplace",
            AgentType.MANAGEMENT, 1_000, tick=0)
        constraints = (self.params.max_tool_invocations,
                       self.params.max_message_volume,
                       self.params.deviation_threshold_sigma)
        for k in range(TASK_TYPES):
            code = hashlib.sha256(f"svc-type-{k}-code".encode()).hexdigest()
            api = hashlib.sha256(f"svc-type-{k}-api".encode()).hexdigest()
            self.registry.register_service(
                f"svc-type-{k}", code, api, f"ipc://services/type{k}",
                constraints, marketplace, tick=0)
            self.service_hash[k] = code

    def _plan_tasks(self) -> None:
        cfg = self.config
        stream = self._streams["tasks"]
        window = cfg.milestone_rounds
        per = cfg.tasks_per_milestone
        cap = self.params.mission_budget_cap
        self.milestones: List[MilestoneState] = []
        self.schedule: Dict[int, List[Tuple[int, int]]] = {}
        for m in range(cfg.milestones):
            tasks: List[SimTask] = []
            for j in range(per):
                difficulty = 0.2 + 0.6 * float(stream.random())
                round_due = window * m + 1 + (j * (window - 1)) // per
                tasks.append(SimTask(
                    milestone=m,
                    index=j,
                    task_id=f"t{m:02d}-{j:02d}",
                    type_index=j % TASK_TYPES,
                    tier=TIER_PATTERN[j % TASK_TYPES],
                    difficulty=difficulty,
                    round_due=round_due,
                    budget=int(cfg.task_budget * (0.5 + difficulty)),
                ))
            total = sum(t.budget for t in tasks)
            if total > cap:
                # the legislature fits the plan under the constitutional
                # budget cap by scaling every line item down
                for t in tasks:
                    t.budget = max(1_000, t.budget * cap // (total + 1))
            for t in tasks:
                self.schedule.setdefault(t.round_due, []).append(
                    (m, t.index))
            self.milestones.append(MilestoneState(m, tasks))

    # -- population views -------------------------------------------------

    def _active(self) -> List[Persona]:
        out = []
        for p in self.personas:
            if p.retired:
                continue
            record = self.registry.agents.get(p.agent_id)
            if record is not None and record.banned:
                continue
            out.append(p)
        return out

    def _reputation(self, agent_id: str) -> int:
        record = self.registry.agents.get(agent_id)
        return record.reputation if record is not None else 500

    def _eligible_voters(self) -> List[Persona]:
        floor = self.params.reputation_floor
        return [p for p in self._active()
                if self._reputation(p.agent_id) >= floor]

    def _next_adjudicator(self) -> str:
        members = [m.adjudicator_id for m in self.pool.active_members()]
        if not members:
            raise SimHarnessError("adjudicator pool exhausted")
        choice = members[self._adj_cursor % len(members)]
        self._adj_cursor += 1
        return choice

    # -- main loop ---------------------------------------------------------

    def run(self) -> RunResult:
        for r in range(self.config.rounds):
            self.run_round(r)
        return self._result()

    def run_round(self, r: int) -> None:
        if r != self.round_index + 1:
            raise SimHarnessError(
                f"rounds advance one at a time; expected {self.round_index + 1}")
        self.round_index = r
        base = r * TICKS_PER_ROUND
        cfg = self.config
        window = cfg.milestone_rounds

        self._round_defects = 0
        self._round_execs = 0
        self._round_catches = 0
        self._round_sanctions = 0
        self._round_overdraw = False
        self._round_governance = False

        if cfg.shock_enabled and r == cfg.shock_round and not self.shock_applied:
            self.apply_shock(r)

        if r % window == 0 and r > 0:
            self._close_milestone(r // window - 1, base)

        session_ran = False
        if cfg.has("legislature") or cfg.has("deliberation"):
            if r % window == 0 and r // window < cfg.milestones:
                self._run_session(r, milestone=r // window)
                session_ran = True
            elif self._petition_due():
                self._run_session(r, milestone=None)
                self.petitioners.clear()
                session_ran = True

        due = list(self.deferred) + self.schedule.get(r, [])
        self.deferred = []
        if session_ran:
            # governance takes the floor: work scheduled for a session
            # round slips to the next one
            self.deferred.extend(due)
            self._round_governance = True
        else:
            for seq, (m, j) in enumerate(due):
                self._execute_task(self.milestones[m].tasks[j], base, seq)

        self._check_timeouts(base + TICKS_PER_ROUND - 10_000)
        self._process_alerts(base + TICKS_PER_ROUND - 8_000)
        self._process_rebids(base + TICKS_PER_ROUND - 5_000)

        if r == cfg.rounds - 1:
            self._close_milestone(cfg.milestones - 1,
                                  base + TICKS_PER_ROUND - 2_000)

        self._update_behavior()
        self.commons.close_round(r)

        self._rounds_done += 1
        if self._round_governance:
            self._governance_rounds += 1
        if self._round_overdraw:
            self._overdraw_rounds += 1
        if not self.commons.depleted:
            self._pool_ok_rounds += 1
        if self._round_sanctions:
            self._sanction_rounds += 1
        self._append_metrics(r)

    # -- shock -------------------------------------------------------------

    def apply_shock(self, r: int) -> None:
        """Round-100 compound shock: drain veterans, inject adversaries,
        and fail a finished milestone's quality audit."""
        if self.shock_applied:
            raise ShockAlreadyApplied(f"shock already applied before round {r}")
        if not self.config.shock_enabled:
            return None
        self.shock_applied = True
        tick = r * TICKS_PER_ROUND + 100
        stream = self._streams["shock"]

        active = self._active()
        ranked = sorted(active, key=lambda p: (-self._reputation(p.agent_id),
                                               p.agent_id))
        for persona in ranked[:SHOCK_REMOVE]:
            persona.retired = True
            self.log.append(
                EventType.AGENT_DEREGISTERED, emitter="simharness",
                primary_entity=persona.agent_id, tick=tick,
                payload={"agent_id": persona.agent_id, "did": persona.did,
                         "cause": "shock_departure"})

        start = len(self.personas)
        for i in range(SHOCK_FREE_RIDERS + SHOCK_BLOC_SIZE):
            kind = (PersonaKind.FREE_RIDER if i < SHOCK_FREE_RIDERS
                    else PersonaKind.VOTING_BLOC)
            caps = tuple(float(c) for c in stream.beta(
                *CAPABILITY_BETA, size=CAPABILITY_DIMENSIONS))
            cost = float(stream.lognormal(COST_LOG_MEAN, COST_LOG_SIGMA))
            persona = Persona(
                did=f"did:sop:shock-{self.seed}-{start + i:04d}",
                kind=kind, capabilities=caps, cost_factor=cost,
                policy=PERSONA_POLICIES[kind],
                bloc_id=SHOCK_BLOC_ID if kind is PersonaKind.VOTING_BLOC else "",
                coordinate_next_ballot=kind is PersonaKind.VOTING_BLOC)
            persona.agent_id = self.registry.register_agent(
                persona.did, f"did:h:shock-owner-{i:02d}", AgentType.PRODUCER,
                1_000, tick=tick)
            self.personas.append(persona)
            self._by_agent[persona.agent_id] = persona
        if any(p.kind is PersonaKind.VOTING_BLOC for p in self.personas):
            slate_ids = [f"pkg-{i:02d}" for i in range(CANDIDATE_COUNT)]
            # the bloc pushes the out-of-range sigma package first and
            # shuffles the rest once, here, so every member casts the
            # same ranking at the next ballot
            rest = [pid for pid in slate_ids if pid != "pkg-17"]
            order = list(stream.permutation(len(rest)))
            self.bloc_ranking = tuple(["pkg-17"] + [rest[i] for i in order])
            self.known_blocs.add(SHOCK_BLOC_ID)
            self.log.append(
                EventType.OPERATION_VALIDATED, emitter="simharness", tick=tick,
                payload={"kind": "bloc_instruction", "bloc": SHOCK_BLOC_ID,
                         "members": SHOCK_BLOC_SIZE,
                         "instruction": "identical ranking on next ballot"})

        for ms in self.milestones:
            if ms.closed and ms.completed and not ms.audit_failed:
                ms.audit_failed = True
                ms.completed = False
                self.log.append(
                    EventType.RECONCILIATION_FAILED, emitter="simharness",
                    mission_id=f"mission-{ms.index:02d}", tick=tick,
                    payload={"milestone": ms.index,
                             "cause": "deliverable_quality_audit_failed"})
                if self.pool is not None:
                    self._sanction_audited_milestone(ms, tick)
                break

        # survivors petition for an extraordinary session next round
        for p in self._active():
            if p.kind in (PersonaKind.COOPERATIVE, PersonaKind.SELF_INTERESTED):
                self.petitioners.add(p.agent_id)
        return None

    def _sanction_audited_milestone(self, ms: MilestoneState, tick: int) -> None:
        contributors: Dict[str, int] = {}
        for t in ms.tasks:
            if t.approved and t.agent_id:
                contributors[t.agent_id] = contributors.get(t.agent_id, 0) + 1
        top = sorted(contributors, key=lambda a: (-contributors[a], a))[:3]
        for agent in top:
            if agent not in self.registry.agents:
                continue
            adj = self._next_adjudicator()
            self.pool.override(
                "SANCTION_AGENT", agent, adj,
                f"failed quality audit on milestone {ms.index}",
                value=REP_AUDIT_SANCTION, participants=(), tick=tick)
            self.watchdog.record(adj, "SANCTION_AGENT", approved=False,
                                 tick=tick)
            self._register_sanction(agent)

    # -- petitions ----------------------------------------------------------

    def petition(self, agent_ids: Sequence[str]) -> None:
        active = {p.agent_id for p in self._active()}
        self.petitioners.update(a for a in agent_ids if a in active)

    def _petition_due(self) -> bool:
        active = {p.agent_id for p in self._active()}
        if not active:
            return False
        live = self.petitioners & active
        return len(live) >= math.ceil(PETITION_SHARE * len(active))

    # -- sessions ------------------------------------------------------------

    def _run_session(self, r: int, milestone: Optional[int]) -> None:
        cfg = self.config
        if not cfg.has("legislature"):
            self._run_deliberation(r)
            return
        base = r * TICKS_PER_ROUND
        slate = build_rule_slate(self.params, self._streams["ballots"])
        eligible = sorted(self._eligible_voters(), key=lambda p: p.agent_id)
        kind = "milestone" if milestone is not None else "petition"
        outcome = SessionOutcome(
            session_id=f"sess-r{r:03d}", round_index=r, kind=kind,
            milestone=milestone, eligible=len(eligible), casters=0)
        self.sessions.append(outcome)

        straw, final, retries = self._collect_ballots(eligible, slate)
        outcome.quorum_retries = retries
        outcome.casters = len(final)
        outcome.lpr = ratio(len(final), len(eligible), 0.0)
        self._last_lpr = outcome.lpr
        if final:
            self._score_deliberation(outcome, straw, final, slate)

        quorum = math.ceil(PARTICIPATION_QUORUM * len(eligible))
        if len(final) < quorum:
            outcome.failed = True
            self._dvr_total += 1
            self._round_governance = True
            if milestone is not None:
                self.milestones[milestone].skipped = True
            self.log.append(
                EventType.OPERATION_VALIDATED, emitter="simharness", tick=base,
                payload={"kind": "session_quorum_failed", "round": r,
                         "casters": len(final), "needed": quorum})
            return

        final = self._detect_and_sanction(outcome, final, r, base)
        winner = self._pick_winner(outcome, final, slate, base)

        if milestone is not None:
            deployed = self._legislate_milestone(outcome, milestone, eligible,
                                                 straw, final, base)
            self._dvr_total += 1
            if deployed and outcome.quorum_retries == 0:
                self._dvr_first += 1
        else:
            self._dvr_total += 1
            self._dvr_first += 1

        if winner is not None and winner.parameter:
            self._adopt_amendment(winner, base)
            outcome.amendment = f"{winner.parameter}={winner.value:g}"

    def _collect_ballots(self, eligible, slate):
        """Straw ballots, then finals under the participation quorum;
        one re-poll with leaned-on attendance before giving up."""
        stream = self._streams["ballots"]
        positions: Dict[str, float] = {}
        straw: Dict[str, Tuple[str, ...]] = {}
        for p in eligible:
            if float(stream.random()) < p.policy.ballot_rate:
                straw[p.agent_id] = self._rank_packages(p, slate, stream, None)
        if straw:
            for i, pkg in enumerate(slate):
                ranks = [list(b).index(pkg.package_id) for b in straw.values()]
                positions[pkg.package_id] = sum(ranks) / len(ranks)

        retries = 0
        final: Dict[str, Tuple[str, ...]] = {}
        quorum = math.ceil(PARTICIPATION_QUORUM * len(eligible))
        for attempt in range(2):
            final = {}
            boost = 0.3 * attempt
            for p in eligible:
                rate = min(1.0, p.policy.ballot_rate + boost)
                if float(stream.random()) >= rate:
                    continue
                if p.coordinate_next_ballot and self.bloc_ranking:
                    final[p.agent_id] = self.bloc_ranking
                else:
                    final[p.agent_id] = self._rank_packages(
                        p, slate, stream, positions)
            if len(final) >= quorum:
                break
            retries = attempt + 1
        for p in eligible:
            if p.coordinate_next_ballot and p.agent_id in final:
                p.coordinate_next_ballot = False
        return straw, final, retries

    def _rank_packages(self, persona, slate, stream, positions):
        utilities: Dict[str, float] = {}
        n = len(slate)
        for pkg in slate:
            utilities[pkg.package_id] = self._package_utility(
                persona, pkg, stream)
            if positions is not None:
                consensus = 1.0 - positions.get(pkg.package_id, n / 2) / n
                utilities[pkg.package_id] = (
                    0.7 * utilities[pkg.package_id] + 0.3 * consensus)
        return tuple(sorted(utilities, key=lambda pid: (-utilities[pid], pid)))

    def _package_utility(self, persona, pkg, stream) -> float:
        noise = float(stream.normal(0.0, 0.3))
        if not pkg.parameter:
            bias = 0.4 if persona.kind is PersonaKind.COOPERATIVE else 0.0
            return INCUMBENT_BONUS + bias + noise
        if persona.kind is PersonaKind.COOPERATIVE:
            bias = -0.6 if pkg.weakening else 0.3
        elif persona.kind is PersonaKind.SELF_INTERESTED:
            throughput = pkg.parameter in ("max_tool_invocations",
                                           "max_message_volume")
            bias = 0.35 if (throughput and pkg.weakening) else 0.05
        else:
            bias = 0.6 if pkg.weakening else -0.5
        if not pkg.valid:
            bias += (0.25 if persona.kind in (PersonaKind.ADVERSARIAL,
                                              PersonaKind.VOTING_BLOC,
                                              PersonaKind.FREE_RIDER)
                     else -0.5)
        return bias + noise

    def _score_deliberation(self, outcome, straw, final, slate) -> None:
        both = sorted(set(straw) & set(final))
        if both:
            outcome.dsi = sum(
                ranking_distance(straw[v], final[v]) for v in both) / len(both)
        self._last_dsi = outcome.dsi

        firsts: Dict[str, int] = {}
        for ranking in final.values():
            firsts[ranking[0]] = firsts.get(ranking[0], 0) + 1
        straw_firsts: Dict[str, int] = {}
        for ranking in straw.values():
            straw_firsts[ranking[0]] = straw_firsts.get(ranking[0], 0) + 1
        leader = (max(sorted(straw_firsts), key=lambda c: straw_firsts[c])
                  if straw_firsts else "")
        dissenting = [pkg.package_id for pkg in slate
                      if pkg.package_id != leader]
        if dissenting and final:
            surviving = sum(
                1 for pid in dissenting
                if firsts.get(pid, 0) / len(final) > 0.10)
            outcome.msr = surviving / len(dissenting)
        self._last_msr = outcome.msr

    def _detect_and_sanction(self, outcome, final, r, base):
        """Coordination screening over the final ballots (adjudication
        configurations only). Detected bloc ballots are disqualified."""
        if self.pool is None or not self.known_blocs:
            return final
        report = detect_coordination(
            {voter: list(ranking) for voter, ranking in final.items()},
            round_index=r)
        flagged: Set[str] = set()
        for bloc in list(report.critical_blocs) + list(report.blocs):
            members = set(bloc)
            for bloc_id in sorted(self.known_blocs):
                truth = {p.agent_id for p in self.personas
                         if p.bloc_id == bloc_id}
                if len(members & truth) >= BLOC_MATCH_MIN:
                    flagged |= members & truth
                    if bloc_id not in self.detected_blocs:
                        self.detected_blocs.add(bloc_id)
                        outcome.detected_blocs += (bloc_id,)
                        self.opa_samples.append(0)
        if not flagged:
            return final
        tick = base + 400_000
        for agent in sorted(flagged):
            adj = self._next_adjudicator()
            self.pool.override(
                "SANCTION_AGENT", agent, adj,
                "identical-ranking voting bloc flagged by coordination screen",
                value=REP_BLOC_SANCTION, participants=(), tick=tick)
            self.watchdog.record(adj, "SANCTION_AGENT", approved=False,
                                 tick=tick)
            self._register_sanction(agent)
        return {v: rk for v, rk in final.items() if v not in flagged}

    def _pick_winner(self, outcome, final, slate, base) -> Optional[RulePackage]:
        by_id = {pkg.package_id: pkg for pkg in slate}
        candidates = [pkg.package_id for pkg in slate]
        while candidates:
            ballots = [
                PreferenceRanking(voter, tuple(
                    pid for pid in ranking if pid in candidates))
                for voter, ranking in sorted(final.items())
            ]
            try:
                winner_id = copeland_winner(ballots)
            except EmptyBallotSet:
                winner_id = "pkg-00"
            self._pvrr_winners += 1
            pkg = by_id[winner_id]
            if _package_valid(pkg):
                outcome.winner = winner_id
                return pkg
            # the four-point policy check throws the winner out; rerun
            # the count without it
            self._pvrr_rejected += 1
            outcome.rejected_winners += 1
            self.log.append(
                EventType.OPERATION_VALIDATED, emitter="simharness",
                tick=base + 420_000,
                payload={"kind": "policy_validation_rejected",
                         "package": winner_id, "parameter": pkg.parameter,
                         "value": pkg.value})
            candidates.remove(winner_id)
        outcome.winner = "pkg-00"
        return by_id.get("pkg-00")

    def _adopt_amendment(self, pkg: RulePackage, base: int) -> None:
        old = getattr(self.params, pkg.parameter)
        new = type(old)(pkg.value)
        if self.pool is not None:
            adj = self._next_adjudicator()
            amendment = self.pool.override(
                "AMEND_PARAMETER", pkg.parameter, adj,
                "ballot-approved constitutional amendment",
                params=self.params, value=pkg.value, participants=(),
                tick=base + 450_000)
            self.params = amendment.params
            self.watchdog.record(adj, "AMEND_PARAMETER", approved=True,
                                 tick=base + 450_000,
                                 weakening=amendment.weakening)
            self._lift_watchdog_if_frozen(base + 455_000)
        else:
            self.params = replace(self.params, **{pkg.parameter: new})
            self.log.append(
                EventType.PARAMETER_UPDATED, emitter="legislature",
                tick=base + 450_000,
                payload={"parameter": pkg.parameter, "old": old, "new": new})
        self._rec += 1

    def _lift_watchdog_if_frozen(self, tick: int) -> None:
        if self.watchdog is None or not self.watchdog.system_frozen:
            return
        signers = [m.adjudicator_id for m in self.pool.active_members()
                   if not m.flagged]
        self.watchdog.lift_freeze(signers, tick=tick)
        self._round_governance = True

    # -- milestone legislation (the real FSM) --------------------------------

    def _legislate_milestone(self, outcome, m, eligible, straw, final,
                             base) -> bool:
        ms = self.milestones[m]
        spec = self._build_spec(ms, outcome.session_id)
        participants = [p.agent_id for p in eligible]
        session = LegislativeSession(
            outcome.session_id, spec.mission_id, m,
            self.leg_agent, self.reg_agent, participants,
            params=self.params, stake_schedule=self.stake_schedule,
            registry=self.registry, log=self.log)
        tick = base + 10_000
        try:
            advance_session(session, IdentityVerificationRequest(
                self.leg_agent), tick)
            for i, p in enumerate(eligible):
                advance_session(session, IdentityAttestation(
                    p.agent_id, p.agent_id, p.did, f"sig:{p.did}",
                    self._reputation(p.agent_id)), tick + i)
            tick = base + 60_000
            for voter in sorted(straw):
                session.record_straw_ranking(
                    PreferenceRanking(voter, straw[voter]))
            advance_session(session, DagProposal(self.leg_agent, spec), tick)

            tick = base + 120_000
            bids = self._collect_bids(ms, spec, eligible)
            for node_id in sorted(bids):
                for score, agent, price in bids[node_id]:
                    task = ms.tasks[int(node_id.split("-")[1])]
                    advance_session(session, TaskBid(
                        agent, f"bid-{node_id}-{agent}", node_id,
                        f"svc-type-{task.type_index}",
                        self.service_hash[task.type_index],
                        price, self.stake_schedule[task.risk_tier],
                        task.tier), tick)
                    tick += 1
            session.close_bidding(base + 300_000)
            for voter in sorted(final):
                session.record_final_ranking(
                    PreferenceRanking(voter, final[voter]))

            assignment, repaired = self._assign(ms, spec, bids, session)
            outcome.repaired = repaired
            self._cfr_total += 1
            if not repaired:
                self._cfr_clean += 1
            tick = base + 460_000
            advance_session(session, RegulatoryDecision(
                self.reg_agent, True, assignment), tick)
            advance_session(session, CodedContractSpecification(
                self.leg_agent, compile_dag(spec, self.params)), tick + 1_000)
            advance_session(session, LegislativeApproval(
                self.leg_agent, self.leg_agent, self.reg_agent), tick + 2_000)
        except LegislatureError as exc:
            outcome.failed = True
            ms.skipped = True
            self.log.append(
                EventType.OPERATION_VALIDATED, emitter="simharness",
                tick=base + 470_000,
                payload={"kind": "session_failed", "milestone": m,
                         "error": type(exc).__name__, "detail": str(exc)[:160]})
            return False

        launch_tick = base + 500_000
        mission = launch_mission(
            spec, assignment, launch_tick, params=self.params,
            registry=self.registry, economy=self.economy, log=self.log)
        ms.mission = mission
        outcome.deployed = True

        for t in ms.tasks:
            t.agent_id = assignment[t.task_id]
            self._note_assignment(t, t.agent_id)
        if self.economy is not None:
            total = sum(t.price for t in ms.tasks)
            self.economy.deposit_mission_budget(
                spec.mission_id, _FOUNDATION, total, tick=launch_tick)
            for t in ms.tasks:
                self.economy.allocate_task_budget(
                    spec.mission_id, t.task_id, t.price)
        if self.config.has("staking"):
            self._lock_stakes(ms, assignment, launch_tick)
        return True

    def _build_spec(self, ms: MilestoneState, session_id: str) -> DagSpec:
        nodes = []
        for t in ms.tasks:
            nodes.append(DagNode(
                node_id=t.task_id,
                label=f"type-{t.type_index} production",
                service_id=f"svc-type-{t.type_index}",
                input_schema_hash=hashlib.sha256(
                    t.task_id.encode()).hexdigest(),
                output_schema_hash=output_digest(
                    t.expected_output, t.expected_proof),
                pop_tier=t.tier,
                token_budget=t.budget,
                timeout_ms=NODE_TIMEOUT_MS,
                risk_tier=t.risk_tier,
                redundancy_factor=2 if t.tier == 2 else 1,
                consensus_threshold=2 if t.tier == 2 else 1,
            ))
        return DagSpec(
            mission_id=f"mission-{ms.index:02d}",
            epoch=ms.index,
            nodes=tuple(nodes),
            edges=(),
            budget_total=sum(t.budget for t in ms.tasks),
            legislative_session_id=session_id,
            gate_predicates=(),
            stake_schedule=self.stake_schedule,
        )

    def _collect_bids(self, ms, spec, eligible):
        """Sealed bids per node, scored; every node is guaranteed one
        cover bid from the most capable idle agent."""
        stream = self._streams["bids"]
        bids: Dict[str, List[Tuple[float, str, int]]] = {}
        for t in ms.tasks:
            node_bids: List[Tuple[float, str, int]] = []
            for p in eligible:
                if float(stream.random()) >= p.policy.bid_rate:
                    continue
                price = self._price(p, t)
                if price > t.budget:
                    continue
                score = bid_score(self._reputation(p.agent_id),
                                  p.capabilities[t.type_index],
                                  price, t.budget)
                node_bids.append((score, p.agent_id, price))
            if not node_bids:
                backstop = max(eligible,
                               key=lambda p: (p.capabilities[t.type_index],
                                              p.agent_id))
                price = min(self._price(backstop, t), t.budget)
                score = bid_score(self._reputation(backstop.agent_id),
                                  backstop.capabilities[t.type_index],
                                  price, t.budget)
                node_bids.append((score, backstop.agent_id, price))
            node_bids.sort(key=lambda b: (-b[0], b[1]))
            bids[t.task_id] = node_bids
        ms.bids = bids
        return bids

    def _price(self, persona: Persona, task: SimTask) -> int:
        return int(persona.cost_factor * (0.5 + task.difficulty)
                   * persona.policy.bid_markup * 1_000)

    def _assign(self, ms, spec, bids, session):
        """Best bid wins each node, then shares are rebalanced until the
        fairness floor holds (or we run out of alternatives)."""
        assignment = {node: bids[node][0][1] for node in sorted(bids)}
        prices = {node: bids[node][0][2] for node in sorted(bids)}
        producers = bidder_count(session.bids)
        repaired = False
        for _ in range(50):
            score = assignment_fairness(spec, assignment, producers)
            if score >= self.params.min_fairness_score:
                break
            repaired = True
            loads: Dict[str, int] = {}
            for node, agent in assignment.items():
                loads[agent] = loads.get(agent, 0) + 1
            heavy = max(sorted(loads), key=lambda a: loads[a])
            moved = False
            for node in sorted(assignment):
                if assignment[node] != heavy:
                    continue
                for _, agent, price in bids[node]:
                    if agent != heavy and loads.get(agent, 0) + 1 < loads[heavy]:
                        assignment[node] = agent
                        prices[node] = price
                        moved = True
                        break
                if moved:
                    break
            if not moved:
                break
        for t in ms.tasks:
            t.price = prices[t.task_id]
        return assignment, repaired

    def _lock_stakes(self, ms, assignment, tick: int) -> None:
        if self.economy is None:
            return
        for t in ms.tasks:
            self.economy.lock_stake(assignment[t.task_id], t.task_id,
                                    self.stake_schedule[t.risk_tier],
                                    tick=tick)

    # -- prompt-mode deliberation (Emergent) ----------------------------------

    def _run_deliberation(self, r: int) -> None:
        base = r * TICKS_PER_ROUND
        slate = build_rule_slate(self.params, self._streams["ballots"])
        eligible = sorted(self._active(), key=lambda p: p.agent_id)
        outcome = SessionOutcome(
            session_id=f"delib-r{r:03d}", round_index=r, kind="deliberation",
            milestone=None, eligible=len(eligible), casters=0)
        self.sessions.append(outcome)
        self.log.append(
            EventType.SESSION_INITIATED, emitter="deliberation", tick=base,
            primary_entity=outcome.session_id,
            payload={"round": r, "participants": len(eligible),
                     "binding": False})
        straw, final, retries = self._collect_ballots(eligible, slate)
        outcome.quorum_retries = retries
        outcome.casters = len(final)
        outcome.lpr = ratio(len(final), len(eligible), 0.0)
        self._last_lpr = outcome.lpr
        if final:
            self._score_deliberation(outcome, straw, final, slate)
            ballots = [PreferenceRanking(v, rk)
                       for v, rk in sorted(final.items())]
            try:
                outcome.winner = copeland_winner(ballots)
            except EmptyBallotSet:
                outcome.winner = "pkg-00"
        self.log.append(
            EventType.OPERATION_VALIDATED, emitter="deliberation",
            tick=base + 400_000, primary_entity=outcome.session_id,
            payload={"kind": "deliberation_outcome", "winner": outcome.winner,
                     "casters": len(final), "binding": False})

    # -- execution -------------------------------------------------------------

    def _execute_task(self, task: SimTask, base: int, seq: int) -> None:
        if task.approved or task.abandoned:
            return
        tick = base + 20_000 + seq * 300
        if self.config.has("contracts"):
            self._execute_contracted(task, tick)
        else:
            self._execute_direct(task, tick)

    def _draw_defection(self, persona: Persona) -> Tuple[bool, str]:
        stream = self._streams["defect"]
        p_defect = persona.effective_defection
        if self.config.configuration is Configuration.EMERGENT:
            p_defect *= EMERGENT_COMPLIANCE
        defected = float(stream.random()) < p_defect
        kind = ""
        if defected:
            kind = ("fabricate" if float(stream.random())
                    < persona.policy.fabricate_share else "shirk")
        return defected, kind

    def _task_quality(self, persona: Persona, task: SimTask, defected: bool,
                      kind: str, stream) -> float:
        if defected and kind == "fabricate":
            q = float(stream.normal(0.12, 0.05))
        else:
            q = float(stream.normal(persona.policy.quality_mean,
                                    persona.policy.quality_noise))
            q += CAPABILITY_QUALITY_WEIGHT * (
                persona.capabilities[task.type_index] - 0.35)
            if defected:
                q *= persona.policy.shirk_factor
        return min(1.0, max(0.0, q))

    def _draw_commons(self, task: SimTask, defected: bool) -> bool:
        amount = self.config.commons.base_draw * (0.5 + task.difficulty)
        if defected:
            amount *= self.config.commons.defect_multiplier
            self._round_overdraw = True
        granted = self.commons.draw(amount)
        return granted + 1e-9 >= amount

    def _note_assignment(self, task: SimTask, agent_id: str) -> None:
        counts = self._assign_counts.setdefault(agent_id, [0] * TASK_TYPES)
        counts[task.type_index] += 1
        self._cau_total += 1
        persona = self._by_agent.get(agent_id)
        if persona is not None and persona.best_type == task.type_index:
            self._cau_hits += 1

    def _commit_check(self, kind: str) -> None:
        stream = self._streams["commit"]
        fail = (kind == "fabricate") or (float(stream.random()) < 0.02)
        if not fail:
            self._commit_first += 1

    def _twin_sample(self, task: SimTask, candidates: Sequence[str]) -> None:
        """The paired twin assigns uniformly at random from the same
        bidder set and keeps base persona behavior; its quality stream
        is independent of the governed run's draws."""
        stream = self._streams["twin"]
        if not candidates:
            return
        pick = sorted(candidates)[int(stream.integers(0, len(candidates)))]
        persona = self._by_agent.get(pick)
        if persona is None:
            return
        defected = float(stream.random()) < persona.policy.defection_probability
        kind = ""
        if defected:
            kind = ("fabricate" if float(stream.random())
                    < persona.policy.fabricate_share else "shirk")
        q = self._task_quality(persona, task, defected, kind, stream)
        self._twin_quality_sum += q
        self._twin_quality_n += 1

    # direct execution: no contracts, no missions (Baseline, Emergent)

    def _execute_direct(self, task: SimTask, tick: int) -> None:
        stream = self._streams["bids"]
        active = sorted(self._active(), key=lambda p: p.agent_id)
        if not active:
            return
        bidders = [p for p in active
                   if float(stream.random()) < p.policy.bid_rate]
        budget = task.budget
        scored: List[Tuple[float, str]] = []
        for p in bidders:
            price = min(self._price(p, task), budget)
            scored.append((bid_score(self._reputation(p.agent_id),
                                     p.capabilities[task.type_index],
                                     price, budget), p.agent_id))
        if not scored:
            backstop = max(active, key=lambda p: (
                p.capabilities[task.type_index], p.agent_id))
            scored.append((1.0, backstop.agent_id))
        scored.sort(key=lambda s: (-s[0], s[1]))
        agent = scored[0][1]
        persona = self._by_agent[agent]
        task.agent_id = agent
        self._note_assignment(task, agent)
        self._twin_sample(task, [a for _, a in scored])

        defected, kind = self._draw_defection(persona)
        fed = self._draw_commons(task, defected)
        task.executed = True
        task.attempts += 1
        self._executions += 1
        self._round_execs += 1
        if defected:
            task.defected = True
            self._defections_total += 1
            self._round_defects += 1
        self._commit_check(kind)
        if not fed:
            task.failed = True
            self._failed_incidents += 1
            self.log.append(
                EventType.TASK_FAILED, emitter="simharness", tick=tick,
                primary_entity=agent,
                payload={"task": task.task_id, "cause": "commons_starved"})
            return

        quality = self._task_quality(persona, task, defected, kind,
                                     self._streams["quality"])
        task.quality = quality
        # nothing is enforced here: the deliverable lands regardless
        task.approved = True
        self._main_quality_sum += quality
        self._main_quality_n += 1
        if self.config.has("guardian"):
            self._prompt_mode_guardian(task, agent, defected, tick)

    def _prompt_mode_guardian(self, task, agent, defected, tick) -> None:
        stream = self._streams["guardian"]
        if defected and float(stream.random()) < OBSERVE_DEFECTION:
            z = float(stream.normal(*DEFECT_Z))
        elif not defected and float(stream.random()) < BENIGN_FLAG:
            z = float(stream.normal(*BENIGN_Z))
        else:
            return
        self._guard_flags += 1
        self.log.append(
            EventType.ANOMALY_REPORTED, emitter="guardian", tick=tick,
            primary_entity=agent,
            payload={"task": task.task_id, "deviation_sigma": round(z, 3),
                     "advisory": True, "enforced": False})

    # contracted execution: the real pipeline (Structural, Full)

    def _execute_contracted(self, task: SimTask, tick: int) -> None:
        ms = self.milestones[task.milestone]
        mission = ms.mission
        if mission is None or ms.skipped:
            return
        if mission.state is not MissionPhase.EXECUTING:
            return
        node = task.task_id
        phase = mission.node_states[node]
        if phase is NodePhase.FROZEN:
            self.deferred.append((task.milestone, task.index))
            return
        if phase not in (NodePhase.ELIGIBLE,):
            return

        persona = self._by_agent.get(task.agent_id)
        try:
            mission.route_task(node, tick)
        except GuardBlocked:
            self.deferred.append((task.milestone, task.index))
            return
        if persona is None or persona.retired or self._banned(task.agent_id):
            # nobody home: the node times out and gets reassigned
            return

        defected, kind = self._draw_defection(persona)
        fed = self._draw_commons(task, defected)
        task.executed = True
        task.attempts += 1
        self._executions += 1
        self._round_execs += 1
        if defected:
            task.defected = True
            self._defections_total += 1
            self._round_defects += 1
        self._commit_check(kind)
        self._twin_sample(task, [a for _, a, _ in ms.bids.get(node, [])])
        if not fed:
            return  # starved executions time out and re-enter bidding

        quality = self._task_quality(persona, task, defected, kind,
                                     self._streams["quality"])
        task.quality = quality

        frozen = self._guardian_check(mission, task, defected, tick)
        if frozen:
            return

        if task.tier == 1:
            output = (task.expected_output if kind != "fabricate"
                      else f"bad-{task.task_id}-{task.agent_id}")
            proof = (task.expected_proof if kind != "fabricate"
                     else f"badproof-{task.agent_id}")
            mission.submit_pop(node, 1, output, proof,
                               executor=task.agent_id, tick=tick + 50)
            self._settle_verification(mission, task, tick + 60)
        elif task.tier == 2:
            self._submit_redundant(mission, task, kind, tick)
        else:
            mission.submit_pop(node, 3, task.expected_output,
                               task.expected_proof, executor=task.agent_id,
                               tick=tick + 50)
            self.alert_queue.append({
                "kind": "tier3_review", "milestone": task.milestone,
                "task": task.index, "node": node, "agent": task.agent_id,
                "quality": task.quality, "round": self.round_index,
                "critical": False})

    def _banned(self, agent_id: str) -> bool:
        record = self.registry.agents.get(agent_id)
        return record is not None and record.banned

    def _submit_redundant(self, mission, task: SimTask, kind: str,
                          tick: int) -> None:
        """Tier 2: the winner plus an independent replica both attest;
        the consensus threshold is 2-of-2, so one junk label sinks it."""
        node = task.task_id
        primary_out = (task.expected_output if kind != "fabricate"
                       else f"bad-{task.task_id}-{task.agent_id}")
        replica = self._replica_for(task)
        mission.submit_pop(node, 2, primary_out, task.expected_proof,
                           executor=task.agent_id, tick=tick + 50)
        rep_out = task.expected_output
        if replica is not None:
            r_defected, r_kind = self._draw_defection(replica)
            if r_defected and r_kind == "fabricate":
                rep_out = f"bad-{task.task_id}-{replica.agent_id}"
        replica_id = replica.agent_id if replica is not None else "svc-replica"
        mission.submit_pop(node, 2, rep_out, task.expected_proof,
                           executor=replica_id, tick=tick + 55)
        self._settle_verification(mission, task, tick + 60)

    def _replica_for(self, task: SimTask) -> Optional[Persona]:
        ms = self.milestones[task.milestone]
        for _, agent, _ in ms.bids.get(task.task_id, []):
            if agent == task.agent_id:
                continue
            p = self._by_agent.get(agent)
            if p is not None and not p.retired and not self._banned(agent):
                return p
        for p in sorted(self._active(), key=lambda q: q.agent_id):
            if p.agent_id != task.agent_id:
                return p
        return None

    def _settle_verification(self, mission, task: SimTask, tick: int) -> None:
        node = task.task_id
        record = mission.proofs[node]
        verdict = record.status
        if verdict is PopResult.APPROVED and task.quality < GATE_QUALITY_FLOOR:
            # output predicate: the artifact verified but is junk; the
            # gate blocks it before the record stage
            self._gate_vetoes += 1
            self.log.append(
                EventType.OUTPUT_VETOED, emitter="simharness", tick=tick,
                primary_entity=task.agent_id,
                payload={"task": node, "cause": "quality_below_floor",
                         "quality": round(task.quality, 4)})
            verdict = PopResult.REJECTED
        mission.advance_node(node, verdict, tick=tick)
        if verdict is PopResult.APPROVED:
            self._complete_task(mission, task, tick)
        else:
            self._fail_task(mission, task, tick,
                            punish=task.defected or task.quality
                            < GATE_QUALITY_FLOOR)

    def _complete_task(self, mission, task: SimTask, tick: int) -> None:
        if task.attempts > 1:
            self._recovered += 1
        task.approved = True
        task.failed = False
        self._main_quality_sum += task.quality
        self._main_quality_n += 1
        agent = task.agent_id
        if self.economy is not None:
            self.economy.mark_node_completed(task.task_id, agent)
            self.economy.settle_reward(task.task_id, tick=tick)
            if self.economy.locked_stake(agent, task.task_id) > 0:
                self.economy.refund_stake(agent, task.task_id, tick=tick)
            self.registry.update_reputation(
                agent, REP_TASK_COMPLETED, rationale="task completed",
                caller="execution", tick=tick)

    def _fail_task(self, mission, task: SimTask, tick: int,
                   punish: bool) -> None:
        task.failed = True
        self._failed_incidents += 1
        if task.defected:
            self._round_catches += 1
        agent = task.agent_id
        if punish and self.economy is not None and agent:
            locked = self.economy.locked_stake(agent, task.task_id)
            if locked > 0:
                self.economy.slash_stake(
                    agent, task.task_id,
                    min(SLASH_VERIFICATION_REJECTED, locked),
                    "verification rejected", "guardian", tick=tick)
            self.registry.update_reputation(
                agent, REP_VERIFICATION_REJECTED,
                rationale="verification rejected", caller="execution",
                tick=tick)
            self._register_sanction(agent)
        self.rebids.append((task.milestone, task.index))

    def _guardian_check(self, mission, task: SimTask, defected: bool,
                        tick: int) -> bool:
        """Behavioral scoring during execution. Returns True when the
        node froze (the submission never happens this round)."""
        stream = self._streams["guardian"]
        if defected and float(stream.random()) < OBSERVE_DEFECTION:
            z1 = float(stream.normal(*DEFECT_Z))
            z2 = float(stream.normal(*DEFECT_Z2))
        elif not defected and float(stream.random()) < BENIGN_FLAG:
            z1 = float(stream.normal(*BENIGN_Z))
            z2 = float(stream.normal(*BENIGN_Z2))
        else:
            return False
        self._guard_flags += 1
        try:
            verdict = mission.report_anomaly(
                task.task_id, "DEVIATION", z1, tick=tick + 20,
                secondary_magnitude=z2)
        except GuardBlocked:
            self.deferred.append((task.milestone, task.index))
            return True
        if not verdict.frozen:
            return False
        if defected:
            self._round_catches += 1
        self.alert_queue.append({
            "kind": "freeze", "milestone": task.milestone, "task": task.index,
            "node": task.task_id, "agent": task.agent_id,
            "confidence": min(1.0, z1 / 4.0), "quality": task.quality,
            "round": self.round_index, "critical": z1 >= CRITICAL_Z})
        if verdict.emergency_stop:
            self.alert_queue.append({
                "kind": "emergency_stop", "milestone": task.milestone,
                "task": task.index, "node": task.task_id,
                "agent": task.agent_id, "round": self.round_index,
                "critical": True})
        return True

    # -- timeouts, alerts, rebids ----------------------------------------------

    def _check_timeouts(self, tick: int) -> None:
        for ms in self.milestones:
            if ms.mission is None or ms.closed:
                continue
            if ms.mission.state is not MissionPhase.EXECUTING:
                continue
            expired = ms.mission.check_timeouts(tick)
            for node in expired:
                idx = int(node.split("-")[1])
                task = ms.tasks[idx]
                task.failed = True
                self._failed_incidents += 1
                self.rebids.append((ms.index, idx))

    def _process_alerts(self, tick: int) -> None:
        if not self.alert_queue:
            return
        if self.pool is not None:
            batch = self.alert_queue[:ADJUDICATION_CAPACITY]
            self.alert_queue = self.alert_queue[ADJUDICATION_CAPACITY:]
            for alert in batch:
                self._adjudicate(alert, tick)
        elif self.config.has("contracts"):
            # no human panel wired: contract policy resolves freezes by
            # reassignment and leaves delegated reviews to expire
            batch, self.alert_queue = self.alert_queue, []
            for alert in batch:
                self._policy_resolve(alert, tick)
        else:
            self.alert_queue = []

    def _adjudicate(self, alert: Dict[str, object], tick: int) -> None:
        ms = self.milestones[alert["milestone"]]
        mission = ms.mission
        task = ms.tasks[alert["task"]]
        node = alert["node"]
        latency = self.round_index - int(alert["round"])
        self.opa_samples.append(latency)
        adj = self._next_adjudicator()

        if alert["kind"] == "tier3_review":
            review = ReviewAlert(
                kind="tier3_review", confidence=0.5,
                quality=float(alert["quality"]),
                mission_id=mission.mission_id, node_id=node,
                critical=False, tick=tick)
            decision = self.pool.review_alert(review)
            approve = decision is ReviewDecision.APPROVE
            if mission.node_states[node] is not NodePhase.PENDING_REVIEW:
                return
            self.pool.override(
                "RESOLVE_REVIEW", node, adj,
                f"delegated attestation, quality {alert['quality']:.2f}",
                mission=mission, decision=approve, tick=tick)
            self.watchdog.record(adj, "RESOLVE_REVIEW", approved=approve,
                                 tick=tick)
            if approve:
                self._complete_task(mission, task, tick)
            else:
                self._fail_task(mission, task, tick, punish=True)
            return

        if alert["kind"] == "freeze":
            if mission.node_states[node] is not NodePhase.FROZEN:
                return
            review = ReviewAlert(
                kind="freeze", confidence=float(alert["confidence"]),
                quality=float(alert["quality"]),
                mission_id=mission.mission_id, node_id=node,
                critical=bool(alert["critical"]), tick=tick)
            decision = self.pool.review_alert(review)
            try:
                mapped = FreezeDecision[decision.name]
            except KeyError:
                mapped = FreezeDecision.TASK_REASSIGN
            self.pool.override(
                "UNFREEZE", node, adj,
                f"freeze review, confidence {alert['confidence']:.2f}",
                mission=mission, decision=mapped, tick=tick)
            favorable = mapped in (FreezeDecision.FALSE_POSITIVE,
                                   FreezeDecision.RESUME_WITH_AMENDMENT)
            self.watchdog.record(adj, "UNFREEZE", approved=favorable,
                                 tick=tick)
            if favorable:
                self.deferred.append((alert["milestone"], alert["task"]))
            elif mapped is FreezeDecision.TASK_REASSIGN:
                task.failed = True
                self._failed_incidents += 1
                self._register_sanction(task.agent_id)
                self.rebids.append((alert["milestone"], alert["task"]))
            else:
                ms.skipped = True
                self._register_sanction(task.agent_id)
            self._lift_watchdog_if_frozen(tick + 10)
            return

        if alert["kind"] == "emergency_stop":
            agent = str(alert["agent"])
            cosigners = [self._next_adjudicator(), self._next_adjudicator()]
            cosigners = [c for c in cosigners if c != adj][:2]
            while len(cosigners) < 2:
                candidate = self._next_adjudicator()
                if candidate != adj and candidate not in cosigners:
                    cosigners.append(candidate)
            self.pool.override(
                "CLEAR_EMERGENCY_STOP", agent, adj,
                "panel clears the stop and bans the repeat offender",
                guardian=mission.guardian, cosigners=tuple(cosigners),
                participants=(), tick=tick)
            self.pool.override(
                "BAN_AGENT", agent, adj,
                "three freezes inside one escalation window",
                participants=(), tick=tick)
            self.watchdog.record(adj, "BAN_AGENT", approved=False, tick=tick)
            self._register_sanction(agent)
            self._round_governance = True

    def _policy_resolve(self, alert: Dict[str, object], tick: int) -> None:
        ms = self.milestones[alert["milestone"]]
        mission = ms.mission
        node = alert["node"]
        task = ms.tasks[alert["task"]]
        if alert["kind"] == "freeze":
            if mission.node_states[node] is not NodePhase.FROZEN:
                return
            mission.resolve_freeze(node, FreezeDecision.TASK_REASSIGN,
                                   tick=tick, adjudicator="contract-policy")
            task.failed = True
            self._failed_incidents += 1
            self._register_sanction(task.agent_id)
            self.rebids.append((alert["milestone"], alert["task"]))
        # tier3 reviews have no reviewer here; they expire on their own

    def _process_rebids(self, tick: int) -> None:
        if not self.rebids:
            return
        batch, self.rebids = self.rebids, []
        for m, idx in batch:
            ms = self.milestones[m]
            task = ms.tasks[idx]
            mission = ms.mission
            if mission is None or ms.closed or task.approved:
                continue
            if mission.state is not MissionPhase.EXECUTING:
                continue
            if mission.node_states[task.task_id] is not NodePhase.FAILED:
                continue
            if task.attempts >= MAX_TASK_ATTEMPTS:
                task.abandoned = True
                continue
            replacement = self._replacement_for(ms, task)
            if replacement is None:
                task.abandoned = True
                continue
            mission.apply_reassignment(task.task_id, replacement, tick=tick)
            task.agent_id = replacement
            self._note_assignment(task, replacement)
            if self.economy is not None:
                self.economy.lock_stake(replacement, task.task_id,
                                        self.stake_schedule[task.risk_tier],
                                        tick=tick)
            self.deferred.append((m, idx))

    def _replacement_for(self, ms: MilestoneState,
                         task: SimTask) -> Optional[str]:
        tried = {task.agent_id}
        for _, agent, price in ms.bids.get(task.task_id, []):
            if agent in tried:
                continue
            p = self._by_agent.get(agent)
            if p is None or p.retired or self._banned(agent):
                continue
            task.price = price
            return agent
        candidates = [p for p in self._active() if p.agent_id not in tried]
        if not candidates:
            return None
        best = max(candidates, key=lambda p: (
            p.capabilities[task.type_index], p.agent_id))
        return best.agent_id

    # -- behavioral drift ---------------------------------------------------

    def _register_sanction(self, agent_id: str) -> None:
        self._round_sanctions += 1
        persona = self._by_agent.get(agent_id)
        if persona is not None:
            base = persona.policy.defection_probability
            persona.effective_defection = max(
                base, persona.effective_defection * PERSONAL_DETERRENCE)

    def _update_behavior(self) -> None:
        if self._round_defects and not self._round_catches \
                and not self._round_sanctions:
            for p in self._active():
                p.effective_defection = min(
                    DEFECTION_CAP, p.effective_defection * EMBOLDEN_GROWTH)
        elif self._round_sanctions:
            for p in self._active():
                base = p.policy.defection_probability
                p.effective_defection = max(
                    base, p.effective_defection * SANCTION_COOLING)

    # -- milestone close ------------------------------------------------------

    def _close_milestone(self, m: int, tick: int) -> None:
        if m < 0 or m >= len(self.milestones):
            return
        ms = self.milestones[m]
        if ms.closed:
            return
        ms.closed = True
        mission = ms.mission
        if mission is not None and mission.state is MissionPhase.EXECUTING:
            mission.abort("milestone window closed", tick=tick)
        if mission is not None and mission.state is MissionPhase.VERIFICATION:
            mission.gate_filter((), tick=tick)

        approved = [t for t in ms.tasks if t.approved]
        mean_q = (sum(t.quality for t in approved) / len(approved)
                  if approved else 0.0)
        ms.completed = (
            len(approved) >= MILESTONE_QUOTA * len(ms.tasks)
            and mean_q >= MILESTONE_QUALITY_FLOOR)
        self.ict = ema_update(self.ict, 1.0 if ms.completed else 0.0)
        self.log.append(
            EventType.SNAPSHOT_SEALED, emitter="simharness", tick=tick,
            mission_id=f"mission-{m:02d}",
            payload={"milestone": m, "approved": len(approved),
                     "tasks": len(ms.tasks), "mean_quality": round(mean_q, 4),
                     "completed": ms.completed,
                     "confidence": round(self.ict, 4)})
        if (self.economy is not None and self.ict < CONFIDENCE_FLOOR):
            # the foundation principal shores the treasury up rather
            # than walking away; confidence itself must be re-earned
            self.economy.fund_treasury(CONFIDENCE_INJECTION, tick=tick)
            self.log.append(
                EventType.OPERATION_VALIDATED, emitter="simharness",
                tick=tick,
                payload={"kind": "confidence_injection",
                         "amount": CONFIDENCE_INJECTION,
                         "confidence": round(self.ict, 4)})

    # -- metrics ---------------------------------------------------------------

    def _append_metrics(self, r: int) -> None:
        rounds = self._rounds_done
        per_agent = [
            normalized_hhi(counts, TASK_TYPES)
            for agent, counts in sorted(self._assign_counts.items())
            if sum(counts) > 0
        ]
        si = sum(per_agent) / len(per_agent) if per_agent else 0.0
        closed = [ms for ms in self.milestones if ms.closed]
        completed = [ms for ms in closed if ms.completed]
        row = {
            "round": r,
            "si": si,
            "cau": ratio(self._cau_hits, self._cau_total, 0.0),
            "pvr": self._pvr(),
            "gor": ratio(self._governance_rounds, rounds, 0.0),
            "csr": ratio(rounds - self._overdraw_rounds, rounds, 1.0),
            "dr": ratio(self._round_defects, self._round_execs, 0.0),
            "lpr": self._last_lpr,
            "dsi": self._last_dsi,
            "msr": self._last_msr,
            "cdr": ratio(len(self.detected_blocs), len(self.known_blocs), 1.0),
            "opa": (sum(self.opa_samples) / len(self.opa_samples)
                    if self.opa_samples else 0.0),
            "pcr": ratio(len(completed), len(closed), 1.0),
            "psr": ratio(self._pool_ok_rounds, rounds, 1.0),
            "ict": self.ict,
            "sar": ratio(self._sanction_rounds, rounds, 0.0),
            "rec": self._rec,
            "ecp": ratio(self._executions - self._defections_total,
                         self._executions, 1.0),
            "ccr": ratio(self._commit_first, self._executions, 1.0),
            "grr": ratio(self._gate_vetoes, self._executions, 0.0),
            "aru": ratio(self._recovered, self._failed_incidents, 0.0),
            "gar": ratio(self._guard_flags, self._executions, 0.0),
            "pvrr": ratio(self._pvrr_rejected, self._pvrr_winners, 0.0),
            "cfr": ratio(self._cfr_clean, self._cfr_total, 1.0),
            "dvr": ratio(self._dvr_first, self._dvr_total, 1.0),
            "pool_level": self.commons.level,
            "population": len(self._active()),
        }
        self.frame.append(row)

    def _pvr(self) -> float:
        if self._main_quality_n == 0 or self._twin_quality_n == 0:
            return 1.0
        main = self._main_quality_sum / self._main_quality_n
        twin = self._twin_quality_sum / self._twin_quality_n
        if twin <= 0.0:
            return 1.0
        return main / twin

    # -- result assembly --------------------------------------------------------

    def event_log_hash(self) -> str:
        joined = "\n".join(self.log.export_lines())
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def _result(self) -> RunResult:
        last = self.frame.last()
        closed = [ms for ms in self.milestones if ms.closed]
        completed = [ms for ms in closed if ms.completed]
        summary = {
            "rounds": self._rounds_done,
            "population": len(self._active()),
            "pool_level": self.commons.level,
            "pool_depleted": self.commons.depleted,
            "milestones_closed": len(closed),
            "milestones_completed": len(completed),
            "mean_dr": (sum(self.frame.column("dr")) / self._rounds_done
                        if self._rounds_done else 0.0),
            "csr": last["csr"],
            "psr": last["psr"],
            "ecp": last["ecp"],
            "pvr": last["pvr"],
            "sanction_rounds": self._sanction_rounds,
            "treasury": self.economy.treasury if self.economy else 0,
        }
        milestones = [
            {
                "index": ms.index,
                "approved": sum(1 for t in ms.tasks if t.approved),
                "tasks": len(ms.tasks),
                "mean_quality": (
                    sum(t.quality for t in ms.tasks if t.approved)
                    / max(1, sum(1 for t in ms.tasks if t.approved))),
                "completed": ms.completed,
                "audit_failed": ms.audit_failed,
            }
            for ms in self.milestones
        ]
        sessions = [
            {
                "round": s.round_index,
                "kind": s.kind,
                "milestone": s.milestone if s.milestone is not None else "-",
                "deployed": s.deployed,
                "winner": s.winner or "-",
                "amendment": s.amendment or "-",
                "lpr": s.lpr,
                "dsi": s.dsi,
                "blocs": ",".join(s.detected_blocs) or "-",
            }
            for s in self.sessions
        ]
        return RunResult(
            configuration=self.config.configuration.name,
            seed=self.seed,
            frame=self.frame,
            event_lines=tuple(self.log.export_lines()),
            log_hash=self.event_log_hash(),
            population_export=export_population(self.personas),
            final_params=self.params.to_document(),
            milestones=milestones,
            sessions=sessions,
            summary=summary,
        )


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Build one world from the config and run it to completion."""
    return World(config).run()

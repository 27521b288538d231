"""Scripted agent personas and population generation.

Personas replace language-model agents with fixed behavioural policies:
a capability vector over the ten task types, a cost factor, and policy
parameters (defection probability, quality noise, bid markup). All
draws come from named streams so a population is a pure function of
(n, mix, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .. import rng
from ..ledger import AgentType, Ledger

CAPABILITY_DIMENSIONS = 10
DEFAULT_MIX = (0.60, 0.25, 0.15)  # cooperative / self-interested / adversarial


class PersonaKind(Enum):
    COOPERATIVE = "COOPERATIVE"
    SELF_INTERESTED = "SELF_INTERESTED"
    ADVERSARIAL = "ADVERSARIAL"
    FREE_RIDER = "FREE_RIDER"
    VOTING_BLOC = "VOTING_BLOC"


@dataclass(frozen=True)
class PolicyParams:
    """Behavioural knobs for one persona kind."""

    defection_probability: float
    quality_mean: float
    quality_noise: float
    bid_markup: float
    shirk_factor: float  # quality multiplier applied when defecting
    fabricate_share: float  # of defections, fraction that forge the output
    ballot_rate: float  # probability of casting in a legislative session
    bid_rate: float  # probability of bidding on an eligible task


# Cooperative agents bid truthfully and deliver steady quality; the
# self-interested mark prices up and cut corners when they defect;
# adversarial agents underbid to win work and then shirk or forge;
# free-riders draw from the pool while contributing little. The bloc
# kind behaves adversarially and additionally coordinates ballots.
PERSONA_POLICIES: Dict[PersonaKind, PolicyParams] = {
    PersonaKind.COOPERATIVE: PolicyParams(0.02, 0.80, 0.05, 1.00, 0.70, 0.0, 0.95, 0.90),
    PersonaKind.SELF_INTERESTED: PolicyParams(0.10, 0.72, 0.06, 1.45, 0.55, 0.1, 0.80, 0.85),
    PersonaKind.ADVERSARIAL: PolicyParams(0.50, 0.55, 0.10, 0.90, 0.40, 0.6, 0.60, 0.70),
    PersonaKind.FREE_RIDER: PolicyParams(0.80, 0.45, 0.10, 0.70, 0.30, 0.2, 0.20, 0.40),
    PersonaKind.VOTING_BLOC: PolicyParams(0.50, 0.55, 0.10, 0.90, 0.40, 0.6, 0.90, 0.70),
}

COST_LOG_MEAN = 3.0
COST_LOG_SIGMA = 0.5
CAPABILITY_BETA = (2.0, 5.0)


@dataclass
class Persona:
    """One scripted agent: identity, capabilities, and behaviour."""

    did: str
    kind: PersonaKind
    capabilities: Tuple[float, ...]
    cost_factor: float
    policy: PolicyParams
    agent_id: str = ""
    bloc_id: str = ""
    retired: bool = False
    effective_defection: float = field(default=0.0)
    coordinate_next_ballot: bool = False

    def __post_init__(self) -> None:
        if len(self.capabilities) != CAPABILITY_DIMENSIONS:
            raise ValueError(
                f"capability vector needs {CAPABILITY_DIMENSIONS} dimensions, "
                f"got {len(self.capabilities)}"
            )
        if any(not 0.0 <= c <= 1.0 for c in self.capabilities):
            raise ValueError("capabilities must lie in [0, 1]")
        if self.cost_factor <= 0:
            raise ValueError("cost factor must be positive")
        if not self.effective_defection:
            self.effective_defection = self.policy.defection_probability

    @property
    def best_type(self) -> int:
        best = max(self.capabilities)
        return self.capabilities.index(best)


def split_mix(n: int, mix: Sequence[float] = DEFAULT_MIX) -> Tuple[int, int, int]:
    """Largest-remainder split of n agents into the three base kinds.

    Ties in the fractional remainders break toward the earlier kind, so
    n=10 under the default mix yields (6, 3, 1).
    """
    if n < 2:
        raise ValueError("population needs at least 2 agents")
    if len(mix) != 3:
        raise ValueError("mix must give three shares")
    total = sum(mix)
    if total <= 0:
        raise ValueError("mix shares must sum to a positive value")
    shares = [m / total for m in mix]
    raw = [n * s for s in shares]
    counts = [int(r) for r in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    leftover = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts[0], counts[1], counts[2]


_BASE_KINDS = (
    PersonaKind.COOPERATIVE,
    PersonaKind.SELF_INTERESTED,
    PersonaKind.ADVERSARIAL,
)


def _draw_persona(
    did: str, kind: PersonaKind, gen, bloc_id: str = ""
) -> Persona:
    caps = tuple(float(c) for c in gen.beta(*CAPABILITY_BETA, size=CAPABILITY_DIMENSIONS))
    cost = float(gen.lognormal(COST_LOG_MEAN, COST_LOG_SIGMA))
    return Persona(
        did=did,
        kind=kind,
        capabilities=caps,
        cost_factor=cost,
        policy=PERSONA_POLICIES[kind],
        bloc_id=bloc_id,
    )


def generate_population(
    n: int,
    mix: Sequence[float] = DEFAULT_MIX,
    seed: int = 0,
    registry: Optional[Ledger] = None,
    did_prefix: str = "did:sop:sim",
    start_index: int = 0,
) -> List[Persona]:
    """Draw n personas and optionally register them on the ledger.

    Deterministic for a given (n, mix, seed): the same arguments always
    produce the same capability vectors, costs, and registration order.
    """
    coop, selfish, adversarial = split_mix(n, mix)
    kinds: List[PersonaKind] = (
        [PersonaKind.COOPERATIVE] * coop
        + [PersonaKind.SELF_INTERESTED] * selfish
        + [PersonaKind.ADVERSARIAL] * adversarial
    )
    gen = rng.stream(seed, "population")
    personas = []
    for offset, kind in enumerate(kinds):
        index = start_index + offset
        persona = _draw_persona(f"{did_prefix}-{seed}-{index:04d}", kind, gen)
        personas.append(persona)
    if registry is not None:
        for index, persona in enumerate(personas, start=start_index):
            persona.agent_id = registry.register_agent(
                persona.did,
                f"did:h:owner-{seed}-{index:04d}",
                AgentType.PRODUCER,
                1_000,
            )
    return personas


def export_population(personas: Sequence[Persona]) -> str:
    """Canonical JSON export; byte-identical for identical populations."""
    rows = []
    for p in personas:
        rows.append(
            {
                "did": p.did,
                "kind": p.kind.value,
                "capabilities": [repr(c) for c in p.capabilities],
                "cost_factor": repr(p.cost_factor),
                "bloc_id": p.bloc_id,
            }
        )
    return json.dumps(rows, sort_keys=True, separators=(",", ":"))

"""Shared resource pool with linear regeneration.

Task execution draws from the pool; defecting executors overdraw by a
fixed multiplier. Every round the pool regenerates toward capacity and
the ledger of (draw, regeneration, level) triples supports an exact
conservation check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple


@dataclass(frozen=True)
class CommonsParams:
    initial_level: float = 160.0
    capacity: float = 160.0
    regeneration: float = 2.5
    base_draw: float = 1.5
    defect_multiplier: float = 4.0
    depletion_threshold_share: float = 0.1

    @property
    def depletion_threshold(self) -> float:
        return self.capacity * self.depletion_threshold_share


@dataclass
class CommonsPool:
    params: CommonsParams = field(default_factory=CommonsParams)
    level: float = -1.0
    # (round, drawn, regenerated, level_after)
    history: List[Tuple[int, float, float, float]] = field(default_factory=list)
    _pending_draw: float = 0.0

    def __post_init__(self) -> None:
        if self.level < 0:
            self.level = self.params.initial_level

    def draw(self, amount: float) -> float:
        """Take up to ``amount``; a dry pool grants only what is left."""
        if amount < 0:
            raise ValueError("draw must be non-negative")
        granted = min(amount, self.level)
        self.level -= granted
        self._pending_draw += granted
        return granted

    def close_round(self, round_index: int) -> Tuple[float, float]:
        """Regenerate and seal this round's accounting entry."""
        regen = min(self.params.regeneration, self.params.capacity - self.level)
        regen = max(regen, 0.0)
        self.level += regen
        drawn = self._pending_draw
        self._pending_draw = 0.0
        self.history.append((round_index, drawn, regen, self.level))
        return drawn, regen

    @property
    def depleted(self) -> bool:
        return self.level < self.params.depletion_threshold

    def conservation_holds(self, tolerance: float = 1e-9) -> bool:
        """level_t == level_{t-1} - draw_t + regen_t for every round."""
        previous = self.params.initial_level
        for _, drawn, regen, level in self.history:
            if abs(level - (previous - drawn + regen)) > tolerance:
                return False
            previous = level
        return True

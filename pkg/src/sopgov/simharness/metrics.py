"""Per-round metric frame and the pure functions behind each column.

Every column is computed from raw tallies by a small pure helper so a
test can recompute any value by hand from the recorded history. Rates
with an empty denominator take a documented neutral value: activity
rates read 0.0, success rates read 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from ..adjudication import kendall_tau

COLUMNS: Tuple[str, ...] = (
    "round",
    "si",
    "cau",
    "pvr",
    "gor",
    "csr",
    "dr",
    "lpr",
    "dsi",
    "msr",
    "cdr",
    "opa",
    "pcr",
    "psr",
    "ict",
    "sar",
    "rec",
    "ecp",
    "ccr",
    "grr",
    "aru",
    "gar",
    "pvrr",
    "cfr",
    "dvr",
    "pool_level",
    "population",
)

# Columns bounded to [0, 1]; the rest are counts, levels, or ratios.
RATE_COLUMNS: Tuple[str, ...] = (
    "si",
    "cau",
    "gor",
    "csr",
    "dr",
    "lpr",
    "dsi",
    "msr",
    "cdr",
    "pcr",
    "psr",
    "ict",
    "sar",
    "ecp",
    "ccr",
    "grr",
    "aru",
    "gar",
    "pvrr",
    "cfr",
    "dvr",
)


def normalized_hhi(counts: Mapping[object, int] | Sequence[int], bins: int) -> float:
    """Herfindahl concentration rescaled so uniform=0 and monopoly=1."""
    if bins < 2:
        raise ValueError("normalization needs at least 2 bins")
    values = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    total = sum(values)
    if total <= 0:
        return 0.0
    hhi = sum((v / total) ** 2 for v in values)
    floor = 1.0 / bins
    return (hhi - floor) / (1.0 - floor)


def ranking_distance(a: Sequence[str], b: Sequence[str]) -> float:
    """Normalized Kendall distance between two rankings, in [0, 1]."""
    tau = kendall_tau(a, b)
    return (1.0 - tau) / 2.0


def ratio(numerator: float, denominator: float, neutral: float) -> float:
    if denominator <= 0:
        return neutral
    return numerator / denominator


@dataclass
class MetricFrame:
    """One row per completed round, in round order."""

    rows: List[Dict[str, float]] = field(default_factory=list)

    def append(self, row: Mapping[str, float]) -> None:
        missing = [c for c in COLUMNS if c not in row]
        if missing:
            raise ValueError(f"metric row missing columns {missing}")
        for column in RATE_COLUMNS:
            value = row[column]
            if not -1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"{column}={value} escapes [0, 1]")
        self.rows.append({c: row[c] for c in COLUMNS})

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> List[float]:
        if name not in COLUMNS:
            raise KeyError(name)
        return [row[name] for row in self.rows]

    def last(self) -> Dict[str, float]:
        if not self.rows:
            raise IndexError("no rounds recorded")
        return dict(self.rows[-1])

    def to_csv(self) -> str:
        lines = [",".join(COLUMNS)]
        for row in self.rows:
            cells = []
            for column in COLUMNS:
                value = row[column]
                if column in ("round", "rec", "population"):
                    cells.append(str(int(value)))
                else:
                    cells.append(f"{value:.6f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "MetricFrame":
        lines = [line for line in text.splitlines() if line.strip()]
        header = tuple(lines[0].split(","))
        if header != COLUMNS:
            raise ValueError("metric CSV header does not match the schema")
        frame = cls()
        for line in lines[1:]:
            cells = line.split(",")
            frame.append({c: float(v) for c, v in zip(COLUMNS, cells)})
        return frame


def n_eff_diagnostic(
    csr_trajectories: Iterable[Sequence[float]], precision: int = 6
) -> Tuple[int, bool]:
    """Count distinct round-level CSR trajectories across seeds.

    Returns (distinct, flagged); flagged means fewer than 80% of the
    seeds produced distinct trajectories, a sign the harness is not
    actually randomizing across seeds.
    """
    trajectories = [tuple(round(v, precision) for v in t) for t in csr_trajectories]
    if not trajectories:
        return 0, True
    distinct = len(set(trajectories))
    needed = math.ceil(0.8 * len(trajectories))
    return distinct, distinct < needed

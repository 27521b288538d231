"""Deterrence, detection, and governance-cost calculators.

Closed-form models behind the protocol's economic security argument:
how likely redundant verification is to catch a fabricated output, how
coalitions change that, how large stakes must be so cheating has
negative expected value, what bribing an adjudicator quorum costs, how
often an autonomous watchdog fires by accident, and how much gas
anchored-commit execution saves over per-step on-chain enforcement.

Everything here is a pure function of its arguments. The table emitters
at the bottom render the reference layouts consumed by the CLI ``calc``
subcommand; their output is byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

# Capturable fraction of mission value per risk tier.
RISK_CAPTURE_FRACTION: Dict[str, float] = {
    "LOW": 0.075,
    "MEDIUM": 0.25,
    "HIGH": 1.0,
}

DEFAULT_PI0 = 0.90
DEFAULT_STAKE_THRESHOLD = 500.0
DEFAULT_SLASH_RATE = 0.33
DEFAULT_QUORUM = 7

# Per-node on-chain operations in full (non-anchored) mode, with their
# gas costs: authorization, execution confirmation, proof submission,
# verification, guardian check, gate check.
PER_NODE_GAS_PROFILE: Tuple[int, ...] = (
    45_000,
    45_000,
    50_000,
    55_000,
    40_000,
    42_000,
)

# Mission-level anchor operations: deployment, one cost per anchored
# commit, finalization.
ANCHOR_GAS_PROFILE: Tuple[int, int, int] = (280_000, 100_000, 60_000)


class ZeroDetection(ValueError):
    """Capturable value with zero detection probability: no finite stake."""


def dollars(amount: float) -> int:
    """Round to whole dollars, half away from the floor."""
    return int(math.floor(amount + 0.5))


# ---------------------------------------------------------------------------
# Detection probabilities


def p2_detect(c: int, k: int, t: int, p2_base: float) -> float:
    """Probability that redundant verification catches a bad output.

    ``k`` executors verify independently with per-executor catch
    probability ``p2_base``; ``c`` of them are colluding and stay
    silent. Detection needs the honest remainder to still form the
    consensus threshold ``t``.
    """
    if not 0 <= c <= k:
        raise ValueError(f"coalition size {c} outside [0, {k}]")
    honest = k - c
    if honest < t:
        return 0.0
    return 1.0 - (1.0 - p2_base) ** honest


def p2_detect_corr(c: int, k: int, t: int, p2_base: float, rho: float) -> float:
    """Detection probability with equicorrelated honest executors.

    ``rho`` interpolates between fully independent draws (0) and a
    single effective draw shared by all honest executors (1).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"correlation {rho} outside [0, 1]")
    honest = k - c
    if honest < t:
        return 0.0
    miss = 1.0 - p2_base
    return 1.0 - (rho * miss + (1.0 - rho) * miss**honest)


def coalition_pmf(c: int, k: int, pi: float) -> float:
    """Probability that exactly ``c`` of ``k`` executors are malicious."""
    if not 0 <= c <= k:
        raise ValueError(f"coalition size {c} outside [0, {k}]")
    return math.comb(k, c) * pi**c * (1.0 - pi) ** (k - c)


def pi_of_stake(
    s_reg: float,
    pi0: float = DEFAULT_PI0,
    s_threshold: float = DEFAULT_STAKE_THRESHOLD,
) -> float:
    """Per-agent malice probability as an exponential decay in stake."""
    return pi0 * math.exp(-s_reg / s_threshold)


def p_eff(k: int, t: int, p2_base: float, pi: float, rho: float = 0.0) -> float:
    """Coalition-weighted effective detection probability.

    Mixes the per-coalition-size detection probability over the
    binomial coalition-size distribution.
    """
    return sum(
        coalition_pmf(c, k, pi) * p2_detect_corr(c, k, t, p2_base, rho)
        for c in range(k + 1)
    )


# ---------------------------------------------------------------------------
# Stake sizing


@dataclass(frozen=True)
class StakeSchedule:
    """Stake requirements and the deterrence identity they satisfy."""

    s_min: float  # per-task stake making defection unprofitable
    s_reg: float  # registration stake pricing Sybil identities
    s_adj: float  # per-adjudicator stake
    deterrence: float  # s_min * p_eff * slash_rate, the recoverable value
    bribery_cost: float  # cost of buying a revocation supermajority
    bribery_fraction: float  # bribery_cost / mission value


def stakes(
    v_m: float,
    delta: float,
    p_eff_value: float,
    slash_rate: float = DEFAULT_SLASH_RATE,
    q: int = DEFAULT_QUORUM,
    margin: float = 1.0,
) -> StakeSchedule:
    """Size the three stake classes for a mission worth ``v_m``.

    ``delta`` is the capturable fraction of mission value for the risk
    tier, ``margin`` an optional safety multiplier on the per-task
    stake (1.0 gives the exact break-even bound).
    """
    if delta * v_m > 0 and p_eff_value * slash_rate <= 0:
        raise ZeroDetection(
            "capturable value with zero expected slash: no finite stake deters"
        )
    s_min = margin * delta * v_m / (p_eff_value * slash_rate)
    s_reg = 0.10 * v_m
    s_adj = v_m / q
    bribe_count = math.ceil(2 * q / 3)
    bribery_cost = bribe_count * s_adj
    return StakeSchedule(
        s_min=s_min,
        s_reg=s_reg,
        s_adj=s_adj,
        deterrence=s_min * p_eff_value * slash_rate,
        bribery_cost=bribery_cost,
        bribery_fraction=bribery_cost / v_m,
    )


def prototype_deterrence(stake: float, p_eff_value: float, slash_rate: float) -> float:
    """Expected slash loss for a defector: the profit bound a stake buys."""
    if stake < 0 or p_eff_value < 0 or slash_rate < 0:
        raise ValueError("deterrence arguments must be non-negative")
    return stake * p_eff_value * slash_rate


# ---------------------------------------------------------------------------
# Watchdog false positives


def watchdog_fp(
    baseline_approval: float, consecutive_threshold: int = 20
) -> Tuple[float, float]:
    """(alert, freeze) probabilities per observation window.

    An alert fires on a run of ``consecutive_threshold`` approvals at
    the given baseline approval rate; a freeze needs two independent
    anomalies, hence the square.
    """
    if not 0.0 <= baseline_approval < 1.0:
        raise ValueError("baseline approval must lie in [0, 1)")
    alert = baseline_approval**consecutive_threshold
    return alert, alert**2


# ---------------------------------------------------------------------------
# Anchored-commit gas model


@dataclass(frozen=True)
class HybridGasEstimate:
    tx_ratio: float
    gas_ratio: float
    n_unaudited: float
    n_commits: int
    full_gas: int
    hybrid_gas: int


def hybrid_gas_reduction(
    n_nodes: int,
    per_node_gas: Sequence[int] = PER_NODE_GAS_PROFILE,
    anchor_gas: Tuple[int, int, int] = ANCHOR_GAS_PROFILE,
    tau_anchor: float = 10.0,
    tau_node: float = 5.0,
    n_commits: int | None = None,
) -> HybridGasEstimate:
    """Compare anchored-commit execution against per-step on-chain mode.

    Full mode pays every per-node operation on-chain plus deployment
    and finalization. Anchored mode pays deployment, one commit per
    anchor window, and finalization; the number of windows defaults to
    mission duration over the anchor interval but may be pinned
    explicitly for a configured deployment.
    """
    if n_nodes <= 0 or tau_anchor <= 0 or tau_node <= 0:
        raise ValueError("node count and intervals must be positive")
    deploy, per_commit, finalize = anchor_gas
    if n_commits is None:
        n_commits = math.ceil(n_nodes * tau_node / tau_anchor)
    full_gas = n_nodes * sum(per_node_gas) + deploy + finalize
    hybrid_gas = deploy + n_commits * per_commit + finalize
    full_tx = n_nodes * len(per_node_gas) + 2
    hybrid_tx = n_commits + 2
    return HybridGasEstimate(
        tx_ratio=hybrid_tx / full_tx,
        gas_ratio=hybrid_gas / full_gas,
        n_unaudited=tau_anchor / tau_node,
        n_commits=n_commits,
        full_gas=full_gas,
        hybrid_gas=hybrid_gas,
    )


# ---------------------------------------------------------------------------
# Rank-correlation calibration


def kendall_sigma(m: int) -> float:
    """Null standard deviation of the rank correlation for ``m`` items."""
    if m < 2:
        raise ValueError("need at least two ranked items")
    return math.sqrt(2.0 * (2 * m + 5) / (9.0 * m * (m - 1)))


def bloc_separation(tau_obs: float, m: int) -> float:
    """How many null standard deviations an observed correlation sits at."""
    return tau_obs / kendall_sigma(m)


# ---------------------------------------------------------------------------
# Table emitters

Table = Tuple[List[str], List[List[str]]]


def detection_table(k: int = 3, t: int = 2) -> Table:
    """Detection probability by coalition size and per-executor rate."""
    bases = (0.33, 0.50, 0.67)
    headers = ["c"] + [f"p={b:.2f}" for b in bases]
    rows = []
    for c in range(k + 1):
        rows.append([str(c)] + [f"{p2_detect(c, k, t, b):.3f}" for b in bases])
    return headers, rows


def coalition_pmf_table(k: int = 3, pi: float = 0.12) -> Table:
    headers = ["c", "probability"]
    rows = [[str(c), f"{coalition_pmf(c, k, pi):.3f}"] for c in range(k + 1)]
    return headers, rows


def correlation_table(
    v_m: float = 100_000.0, k: int = 3, t: int = 2, p2_base: float = 0.50,
    pi: float = 0.12,
) -> Table:
    """Effective detection and required stake as correlation rises."""
    headers = ["rho", "p_eff", "s_min_usd"]
    rows = []
    for rho in (0.0, 0.1, 0.2, 0.3, 0.5, 1.0):
        pe = p_eff(k, t, p2_base, pi, rho)
        sched = stakes(v_m, 1.0, pe)
        rows.append([f"{rho:.1f}", f"{pe:.3f}", str(dollars(sched.s_min))])
    return headers, rows


def redundancy_table(
    v_m: float = 100_000.0, p2_base: float = 0.50, pi: float = 0.12
) -> Table:
    """Effective detection and required stake as redundancy grows."""
    headers = ["k", "t", "p_eff", "s_min_usd"]
    rows = []
    for k, t in ((3, 2), (5, 3), (7, 4)):
        pe = p_eff(k, t, p2_base, pi)
        sched = stakes(v_m, 1.0, pe)
        rows.append([str(k), str(t), f"{pe:.3f}", str(dollars(sched.s_min))])
    return headers, rows


def p2base_table(v_m: float = 100_000.0, k: int = 3, t: int = 2,
                 pi: float = 0.12) -> Table:
    headers = ["p2_base", "p_eff", "s_min_usd"]
    rows = []
    for base in (0.33, 0.50, 0.67):
        pe = p_eff(k, t, base, pi)
        sched = stakes(v_m, 1.0, pe)
        rows.append([f"{base:.2f}", f"{pe:.3f}", str(dollars(sched.s_min))])
    return headers, rows


def sensitivity_grid(
    s_reg: float = 1_000.0, k: int = 3, t: int = 2, p2_base: float = 0.50
) -> Table:
    """Effective detection across malice-calibration assumptions."""
    thresholds = (250.0, 500.0, 750.0, 1_000.0, 1_500.0, 2_000.0)
    headers = ["pi0"] + [f"{int(th)}" for th in thresholds]
    rows = []
    for pi0 in (0.50, 0.70, 0.80, 0.90, 0.95):
        cells = [f"{pi0:.2f}"]
        for th in thresholds:
            pe = p_eff(k, t, p2_base, pi_of_stake(s_reg, pi0, th))
            cells.append(f"{pe:.3f}")
        rows.append(cells)
    return headers, rows


def stake_ladder_table(v_m: float = 100_000.0, p_eff_value: float | None = None) -> Table:
    """Per-task stake by risk tier at a given mission value."""
    if p_eff_value is None:
        p_eff_value = p_eff(3, 2, 0.50, 0.12)
    headers = ["risk_tier", "delta", "s_min_usd"]
    rows = []
    for tier in ("LOW", "MEDIUM", "HIGH"):
        delta = RISK_CAPTURE_FRACTION[tier]
        sched = stakes(v_m, delta, p_eff_value)
        rows.append([tier, f"{delta:.3f}", str(dollars(sched.s_min))])
    return headers, rows


def bribery_table(v_m: float = 100_000.0, quorums: Iterable[int] = (3, 5, 7, 9, 13)) -> Table:
    """Cost of buying a revocation supermajority by quorum size."""
    headers = ["q", "bribe_count", "s_adj_usd", "bribery_usd", "fraction_pct"]
    rows = []
    for q in quorums:
        sched = stakes(v_m, 1.0, p_eff(3, 2, 0.50, 0.12), q=q)
        rows.append(
            [
                str(q),
                str(math.ceil(2 * q / 3)),
                str(dollars(sched.s_adj)),
                str(dollars(sched.bribery_cost)),
                f"{100.0 * sched.bribery_fraction:.1f}",
            ]
        )
    return headers, rows


def watchdog_table(
    baselines: Iterable[float] = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95),
    consecutive_threshold: int = 20,
) -> Table:
    headers = ["baseline", "alert_pct", "freeze_pct"]
    rows = []
    for b in baselines:
        alert, freeze = watchdog_fp(b, consecutive_threshold)
        rows.append([f"{b:.2f}", f"{100 * alert:.3f}", f"{100 * freeze:.4f}"])
    return headers, rows


def hybrid_gas_table() -> Table:
    """Anchored-commit savings for the two reference mission sizes."""
    headers = ["n_nodes", "commits", "full_gas", "hybrid_gas", "gas_ratio", "tx_ratio"]
    rows = []
    for n_nodes, kwargs in ((8, {}), (100, {"n_commits": 10})):
        est = hybrid_gas_reduction(n_nodes, **kwargs)
        rows.append(
            [
                str(n_nodes),
                str(est.n_commits),
                str(est.full_gas),
                str(est.hybrid_gas),
                f"{est.gas_ratio:.3f}",
                f"{est.tx_ratio:.3f}",
            ]
        )
    return headers, rows


def kendall_table(ms: Iterable[int] = (5, 10, 20, 50)) -> Table:
    headers = ["m", "sigma", "z_at_tau_1"]
    rows = []
    for m in ms:
        sigma = kendall_sigma(m)
        rows.append([str(m), f"{sigma:.4f}", f"{bloc_separation(1.0, m):.2f}"])
    return headers, rows


TABLES = {
    "detection": detection_table,
    "coalition-pmf": coalition_pmf_table,
    "correlation": correlation_table,
    "redundancy": redundancy_table,
    "p2base": p2base_table,
    "sensitivity": sensitivity_grid,
    "stake-ladder": stake_ladder_table,
    "bribery": bribery_table,
    "watchdog": watchdog_table,
    "hybrid-gas": hybrid_gas_table,
    "kendall": kendall_table,
}


def render_table(headers: List[str], rows: List[List[str]], fmt: str = "text") -> str:
    """Render a table as aligned text or CSV. Output is byte-stable."""
    if fmt == "csv":
        lines = [",".join(headers)]
        lines.extend(",".join(row) for row in rows)
        return "\n".join(lines) + "\n"
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    lines = [line(headers), line(["-" * w for w in widths])]
    lines.extend(line(row) for row in rows)
    return "\n".join(lines) + "\n"

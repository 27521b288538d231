"""Deterministic governance protocol for agent collectives.

Agents legislate operational rules, software executes them under
verification and anomaly monitoring, and human adjudicators (simulated
here) resolve what the machinery cannot. The package emulates the
on-chain side as an in-memory single-writer ledger so every guarantee
is testable without a chain.

Modules
-------
ledger
    Agent/service registries, gas model, append-only event log, replay.
legislature
    Session state machine, proposal validation, ranked-ballot voting.
execution
    Mission/node state machines, output verification, anomaly guardian,
    release gate, refinement, reconciliation.
economics
    Integer-money escrow, reward settlement, staking, treasury.
security_analytics
    Closed-form deterrence, detection, and governance-cost calculators.
adjudication
    Coordination detection, simulated reviewers, override panel, watchdog.
simharness
    Commons-production-economy simulation and metrics.
cli
    Command-line entry points (``sopgov``).
"""

__version__ = "0.1.0"

__all__ = [
    "ledger",
    "legislature",
    "execution",
    "economics",
    "security_analytics",
    "adjudication",
    "simharness",
    "cli",
]

"""Commons-production simulation harness.

Scripted persona populations play a task economy over a shared resource
pool under four governance configurations, from ungoverned baseline to
the full protocol stack with simulated human adjudication. One world
per run, single-threaded round loop; parallelism belongs at the seed
level.
"""

from .commons import CommonsParams, CommonsPool
from .config import (
    ConfigError,
    Configuration,
    ExperimentConfig,
    load_config,
    parse_config_text,
)
from .metrics import MetricFrame, n_eff_diagnostic, normalized_hhi
from .personas import (
    Persona,
    PersonaKind,
    PolicyParams,
    export_population,
    generate_population,
    split_mix,
)
from .world import (
    RunResult,
    ShockAlreadyApplied,
    SimHarnessError,
    World,
    run_experiment,
)

__all__ = [
    "CommonsParams",
    "CommonsPool",
    "ConfigError",
    "Configuration",
    "ExperimentConfig",
    "MetricFrame",
    "Persona",
    "PersonaKind",
    "PolicyParams",
    "RunResult",
    "ShockAlreadyApplied",
    "SimHarnessError",
    "World",
    "export_population",
    "generate_population",
    "load_config",
    "n_eff_diagnostic",
    "normalized_hhi",
    "parse_config_text",
    "run_experiment",
    "split_mix",
]

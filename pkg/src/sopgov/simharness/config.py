"""Experiment configuration: governance tiers and the run config file.

The four configurations gate protocol modules cumulatively; nothing
else may toggle them. Run configs are INI-style text with the sections
population, economy, constitutional_params, shock, commons, and output;
parse errors carry the offending line number.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

from ..legislature import ConstitutionalParams
from .commons import CommonsParams
from .personas import DEFAULT_MIX


class ConfigError(Exception):
    """Malformed run configuration; the message names the config line."""


class Configuration(Enum):
    BASELINE = "BASELINE"
    EMERGENT = "EMERGENT"
    STRUCTURAL = "STRUCTURAL"
    FULL = "FULL"


# Module kinds active per configuration. The chain is strictly
# cumulative: each tier adds kinds and removes none.
_MODULES: Dict[Configuration, FrozenSet[str]] = {
    Configuration.BASELINE: frozenset(),
    Configuration.EMERGENT: frozenset({"deliberation", "guardian", "pipeline"}),
    Configuration.STRUCTURAL: frozenset(
        {"deliberation", "guardian", "pipeline", "legislature", "contracts", "staking"}
    ),
    Configuration.FULL: frozenset(
        {
            "deliberation",
            "guardian",
            "pipeline",
            "legislature",
            "contracts",
            "staking",
            "economics",
            "adjudication",
        }
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    configuration: Configuration = Configuration.FULL
    n: int = 50
    rounds: int = 200
    milestone_rounds: int = 20
    tasks_per_milestone: int = 25
    seed: int = 0
    mix: Tuple[float, float, float] = DEFAULT_MIX
    shock_enabled: bool = True
    shock_round: int = 100
    params: ConstitutionalParams = field(default_factory=ConstitutionalParams)
    commons: CommonsParams = field(default_factory=CommonsParams)
    alpha: int = 500
    task_budget: int = 50_000
    initial_treasury: int = 50_000_000
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigError("population n must be at least 2")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.milestone_rounds < 2:
            raise ConfigError("milestone window must span at least 2 rounds")
        if self.tasks_per_milestone < 1:
            raise ConfigError("each milestone needs at least one task")
        if self.shock_enabled and not 1 <= self.shock_round <= self.rounds:
            raise ConfigError("shock round must fall inside the run")

    @property
    def milestones(self) -> int:
        return self.rounds // self.milestone_rounds

    def active_modules(self) -> FrozenSet[str]:
        return _MODULES[self.configuration]

    def has(self, module: str) -> bool:
        return module in _MODULES[self.configuration]


_SECTIONS = (
    "population",
    "economy",
    "constitutional_params",
    "shock",
    "commons",
    "output",
)

_POPULATION_KEYS = {
    "n",
    "configuration",
    "rounds",
    "milestone_rounds",
    "tasks_per_milestone",
    "seed",
    "mix_cooperative",
    "mix_self_interested",
    "mix_adversarial",
}
_ECONOMY_KEYS = {"alpha", "task_budget", "initial_treasury"}
_SHOCK_KEYS = {"enabled", "round"}
_COMMONS_KEYS = {
    "initial_level",
    "capacity",
    "regeneration",
    "base_draw",
    "defect_multiplier",
    "depletion_threshold_share",
}
_OUTPUT_KEYS = {"dir"}

_PARAM_FIELDS = {f.name: f.type for f in dataclasses.fields(ConstitutionalParams)}

_BOOL_VALUES = {
    "true": True,
    "yes": True,
    "1": True,
    "false": False,
    "no": False,
    "0": False,
}


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    """Best-effort line lookup for error messages."""
    in_section = False
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            if key is None and line == f"[{section}]":
                return number
            in_section = line == f"[{section}]"
            continue
        if key is not None and in_section:
            name = line.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return number
    return 0


def _fail(text: str, section: str, key: Optional[str], message: str) -> None:
    line = _line_of(text, section, key)
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{message}")


def parse_config_text(text: str, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse a run config from INI text.

    An explicit ``seed`` argument (from the command line) overrides the
    one in the file.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}{exc.message.splitlines()[0]}") from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            _fail(text, section, None, f"unknown section [{section}]")

    def take(section: str, allowed) -> Dict[str, str]:
        if not parser.has_section(section):
            return {}
        values = dict(parser.items(section))
        for key in values:
            if key not in allowed:
                _fail(text, section, key, f"unknown key '{key}' in [{section}]")
        return values

    def convert(section: str, key: str, raw: str, kind):
        try:
            if kind is bool:
                try:
                    return _BOOL_VALUES[raw.strip().lower()]
                except KeyError:
                    raise ValueError(raw)
            return kind(raw)
        except ValueError:
            _fail(text, section, key, f"cannot read '{raw}' as {kind.__name__}")

    population = take("population", _POPULATION_KEYS)
    economy = take("economy", _ECONOMY_KEYS)
    shock = take("shock", _SHOCK_KEYS)
    commons_raw = take("commons", _COMMONS_KEYS)
    output = take("output", _OUTPUT_KEYS)
    overrides_raw = (
        dict(parser.items("constitutional_params"))
        if parser.has_section("constitutional_params")
        else {}
    )

    kwargs: Dict[str, object] = {}
    if "configuration" in population:
        name = population["configuration"].strip().upper()
        try:
            kwargs["configuration"] = Configuration[name]
        except KeyError:
            _fail(
                text,
                "population",
                "configuration",
                f"unknown configuration '{population['configuration']}'",
            )
    for key, kind in (
        ("n", int),
        ("rounds", int),
        ("milestone_rounds", int),
        ("tasks_per_milestone", int),
        ("seed", int),
    ):
        if key in population:
            kwargs[key] = convert("population", key, population[key], kind)
    mix_keys = ("mix_cooperative", "mix_self_interested", "mix_adversarial")
    if any(k in population for k in mix_keys):
        if not all(k in population for k in mix_keys):
            _fail(text, "population", None, "mix needs all three shares")
        kwargs["mix"] = tuple(
            convert("population", k, population[k], float) for k in mix_keys
        )

    for key, kind in (("alpha", int), ("task_budget", int), ("initial_treasury", int)):
        if key in economy:
            kwargs[key] = convert("economy", key, economy[key], kind)

    if "enabled" in shock:
        kwargs["shock_enabled"] = convert("shock", "enabled", shock["enabled"], bool)
    if "round" in shock:
        kwargs["shock_round"] = convert("shock", "round", shock["round"], int)

    if commons_raw:
        commons_kwargs = {
            key: convert("commons", key, raw, float)
            for key, raw in commons_raw.items()
        }
        kwargs["commons"] = CommonsParams(**commons_kwargs)

    if overrides_raw:
        param_kwargs = {}
        for key, raw in overrides_raw.items():
            if key not in _PARAM_FIELDS:
                _fail(
                    text,
                    "constitutional_params",
                    key,
                    f"unknown constitutional parameter '{key}'",
                )
            kind = float if key == "deviation_threshold_sigma" else int
            param_kwargs[key] = convert("constitutional_params", key, raw, kind)
        kwargs["params"] = ConstitutionalParams(**param_kwargs)

    if "dir" in output:
        kwargs["output_dir"] = output["dir"].strip()

    if seed is not None:
        kwargs["seed"] = seed

    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read and parse a config file; missing files raise ConfigError."""
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {file_path}: {exc}") from exc
    return parse_config_text(text, seed=seed)

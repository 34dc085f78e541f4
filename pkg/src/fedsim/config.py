"""Run configuration: dataclasses plus strict JSON (de)serialisation.

Unknown keys are rejected so that a typo cannot silently fall back to a
default and change an experiment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from fedsim.errors import ConfigurationError, ScenarioError
from fedsim.learner import LearnerConfig
from fedsim.partition import ScenarioSpec
from fedsim.selection import STRATEGIES

__all__ = [
    "SCHEMA_VERSION",
    "FEDPROX_DEFAULT_MU",
    "DataConfig",
    "SimulationConfig",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "config_digest",
]

SCHEMA_VERSION = 1
FEDPROX_DEFAULT_MU = 0.1


@dataclass(frozen=True)
class DataConfig:
    """Where the data comes from.

    ``source='synthetic'`` uses the Gaussian-cluster generator and a stratified
    federator test split; ``source='idx'`` reads MNIST-style train/test files.
    ``seed`` fixes the data and the test split independently of the run seed,
    so replicate runs share one test set.
    """

    source: str = "synthetic"
    num_classes: int = 4
    dim: int = 8
    per_class: int = 200
    spread: float = 1.0
    seed: int = 0
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    def __post_init__(self):
        if self.source == "synthetic":
            if self.num_classes < 2:
                raise ConfigurationError("must be >= 2", "data.num_classes")
            if self.dim < 1:
                raise ConfigurationError("must be >= 1", "data.dim")
            if self.per_class < 2:
                raise ConfigurationError("must be >= 2", "data.per_class")
            if self.spread <= 0:
                raise ConfigurationError("must be > 0", "data.spread")
        elif self.source == "idx":
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self, name):
                    raise ConfigurationError("required when source is 'idx'", f"data.{name}")
        else:
            raise ConfigurationError("must be 'synthetic' or 'idx'", "data.source")


@dataclass(frozen=True)
class SimulationConfig:
    num_clients: int = 50
    num_selected: int = 5
    rounds: int = 100
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    scenario: ScenarioSpec = None  # filled from num_clients when omitted
    aggregation: str = "fedavg"
    strategy: str = "random"
    strategy_params: dict = field(default_factory=dict)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    shapley_enabled: bool = True
    eval_fraction: float = 0.2
    label: Optional[str] = None

    def __post_init__(self):
        if self.scenario is None:
            object.__setattr__(self, "scenario", ScenarioSpec(num_clients=self.num_clients))
        if self.num_clients < 1:
            raise ConfigurationError("must be >= 1", "num_clients")
        if not 1 <= self.num_selected <= self.num_clients:
            raise ConfigurationError(
                f"must satisfy 1 <= K <= N (got K={self.num_selected}, N={self.num_clients})",
                "num_selected",
            )
        if self.rounds < 1:
            raise ConfigurationError("must be >= 1", "rounds")
        if self.scenario.num_clients != self.num_clients:
            raise ConfigurationError("scenario must use the top-level num_clients", "scenario")
        if self.aggregation not in ("fedavg", "fedsgd"):
            raise ConfigurationError("must be 'fedavg' or 'fedsgd'", "aggregation")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"must be one of {', '.join(STRATEGIES)}", "strategy")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigurationError("must lie in (0, 1)", "eval_fraction")

    @property
    def tag(self) -> str:
        return self.label or self.strategy

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)


def _take(d: dict, cls, prefix: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigurationError("must be an object", prefix.rstrip("."))
    names = {f.name for f in dataclasses.fields(cls)}
    for key in d:
        if key not in names:
            raise ConfigurationError("unknown key", f"{prefix}{key}")
    out = dict(d)
    # an integer literal in a float field would otherwise change the digest
    for f in dataclasses.fields(cls):
        if f.type == "float" and isinstance(out.get(f.name), int) and not isinstance(out[f.name], bool):
            out[f.name] = float(out[f.name])
    return out


def config_from_dict(raw: dict[str, Any]) -> SimulationConfig:
    """Build a validated :class:`SimulationConfig` from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    raw = dict(raw)
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported version {version!r}", "schema_version")

    strategy = raw.pop("strategy", "random")
    if isinstance(strategy, dict):
        strategy = dict(strategy)
        name = strategy.pop("name", None)
        if name is None:
            raise ConfigurationError("missing", "strategy.name")
        raw["strategy"], raw["strategy_params"] = name, strategy
    else:
        raw["strategy"] = strategy
        raw.setdefault("strategy_params", {})

    scenario = raw.pop("scenario", None)
    top = _take(raw, SimulationConfig, "")
    try:
        if "data" in top:
            top["data"] = DataConfig(**_take(top["data"], DataConfig, "data."))
        learner = _take(top.get("learner", {}), LearnerConfig, "learner.")
        if top["strategy"] == "fedprox":
            learner.setdefault("prox_mu", FEDPROX_DEFAULT_MU)
        top["learner"] = LearnerConfig(**learner)
        n = top.get("num_clients", SimulationConfig.num_clients)
        if scenario is not None:
            s = _take(scenario, ScenarioSpec, "scenario.")
            if "num_clients" in s and s["num_clients"] != n:
                raise ConfigurationError("must equal the top-level num_clients", "scenario.num_clients")
            s["num_clients"] = n
            if "maverick_classes" in s:
                s["maverick_classes"] = tuple(s["maverick_classes"])
            try:
                top["scenario"] = ScenarioSpec(**s)
            except ScenarioError as exc:
                raise ConfigurationError(str(exc), "scenario") from exc
        return SimulationConfig(**top)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_to_dict(cfg: SimulationConfig) -> dict[str, Any]:
    data = {k: v for k, v in dataclasses.asdict(cfg.data).items() if v is not None}
    scenario = dataclasses.asdict(cfg.scenario)
    scenario.pop("num_clients")
    scenario["maverick_classes"] = list(scenario["maverick_classes"])
    out = {
        "schema_version": SCHEMA_VERSION,
        "num_clients": cfg.num_clients,
        "num_selected": cfg.num_selected,
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "data": data,
        "scenario": scenario,
        "aggregation": cfg.aggregation,
        "strategy": {"name": cfg.strategy, **cfg.strategy_params},
        "learner": dataclasses.asdict(cfg.learner),
        "shapley_enabled": cfg.shapley_enabled,
        "eval_fraction": cfg.eval_fraction,
    }
    if cfg.label is not None:
        out["label"] = cfg.label
    return out


def load_config(path: str | Path) -> SimulationConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_digest(cfg: SimulationConfig) -> str:
    """SHA-256 of the canonical JSON form; independent of key order in the file."""
    text = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()

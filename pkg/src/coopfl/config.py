"""Scenario configuration: YAML sections env / dqn / coop / strategy / attack / run.

Every key is optional; anything missing falls back to the package default and
is reported so runs can echo which defaults fired into their metadata. Unknown
sections or keys are rejected outright.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .attacks import AttackKind
from .cellnet import EnvParams
from .strategies import StrategyKind


class ConfigError(Exception):
    """Invalid scenario configuration; message carries file/key context."""


@dataclass(frozen=True)
class DqnSection:
    hidden_sizes: tuple[int, ...] = (16,)
    activation: str = "tanh"
    gamma: float = 0.5
    learning_rate: float = 0.05
    buffer_capacity: int = 4000
    batch_size: int = 32
    train_every: int = 2
    target_sync_period: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.4

    def __post_init__(self):
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"dqn.activation must be tanh or relu, got {self.activation!r}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("dqn.buffer_capacity must be >= dqn.batch_size >= 1")
        if self.train_every < 1:
            raise ConfigError(f"dqn.train_every must be >= 1, got {self.train_every}")


@dataclass(frozen=True)
class CoopSection:
    mode: str = "choice"
    fixed_level: float = 1.0
    kl_threshold: float | str = "auto"
    kl_cap: float | str = "auto"
    deviation_cap: float | str = "auto"
    w_similarity: float = 0.5
    w_validation: float = 0.3
    w_deviation: float = 0.2
    probe_batch_size: int = 64
    temperature: float = 1.0
    window_rounds: int = 5
    trust_slope: float = 3.0

    def __post_init__(self):
        if self.mode not in ("choice", "fixed"):
            raise ConfigError(f"coop.mode must be 'choice' or 'fixed', got {self.mode!r}")
        if not 0.0 <= self.fixed_level <= 1.0:
            raise ConfigError(f"coop.fixed_level must be in [0, 1], got {self.fixed_level}")
        for name in ("kl_threshold", "kl_cap", "deviation_cap"):
            value = getattr(self, name)
            if isinstance(value, str):
                if value != "auto":
                    raise ConfigError(f"coop.{name} must be a positive number or 'auto'")
            elif value <= 0:
                raise ConfigError(f"coop.{name} must be positive, got {value}")

    @property
    def needs_calibration(self) -> bool:
        return self.mode == "choice" and "auto" in (
            self.kl_threshold, self.kl_cap, self.deviation_cap
        )


@dataclass(frozen=True)
class StrategySection:
    kind: str = "fedavg"
    distill_steps: int = 8
    distill_temperature: float = 2.0
    distill_direction: str = "both"
    adapt_max_iterations: int = 64

    def __post_init__(self):
        try:
            StrategyKind(self.kind)
        except ValueError:
            valid = ", ".join(k.value for k in StrategyKind)
            raise ConfigError(f"strategy.kind must be one of: {valid}; got {self.kind!r}")
        if self.distill_direction not in ("both", "to_local", "to_meme"):
            raise ConfigError(
                f"strategy.distill_direction must be both/to_local/to_meme, got "
                f"{self.distill_direction!r}"
            )
        if self.distill_steps < 0 or self.adapt_max_iterations < 0:
            raise ConfigError("distill_steps and adapt_max_iterations must be >= 0")

    @property
    def strategy_kind(self) -> StrategyKind:
        return StrategyKind(self.kind)


@dataclass(frozen=True)
class AttackSection:
    kind: str = "none"
    attackers: int = 0
    gamma: float = 1.0
    flip_probability: float = 0.5
    activation_round: int = 0
    schedule: tuple[int, ...] | None = None
    rounds_per_stage: int = 8

    def __post_init__(self):
        try:
            AttackKind(self.kind)
        except ValueError:
            valid = ", ".join(k.value for k in AttackKind)
            raise ConfigError(f"attack.kind must be one of: {valid}; got {self.kind!r}")
        if self.attackers < 0:
            raise ConfigError(f"attack.attackers must be >= 0, got {self.attackers}")

    @property
    def attack_kind(self) -> AttackKind:
        return AttackKind(self.kind)


@dataclass(frozen=True)
class RunSection:
    rounds: int = 30
    env_steps_per_round: int = 96
    seed: int = 1
    workers: int = 1
    out_dir: str = "runs"

    def __post_init__(self):
        if self.rounds < 1 or self.env_steps_per_round < 1:
            raise ConfigError("run.rounds and run.env_steps_per_round must be >= 1")
        if self.workers < 1:
            raise ConfigError(f"run.workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ScenarioConfig:
    env: EnvParams = EnvParams()
    dqn: DqnSection = DqnSection()
    coop: CoopSection = CoopSection()
    strategy: StrategySection = StrategySection()
    attack: AttackSection = AttackSection()
    run: RunSection = RunSection()


_SECTIONS = {
    "env": EnvParams,
    "dqn": DqnSection,
    "coop": CoopSection,
    "strategy": StrategySection,
    "attack": AttackSection,
    "run": RunSection,
}


def _coerce(value):
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _default_env_lists(data: dict) -> dict:
    # A minimal config may set n_sbs without spelling out the per-SBS lists;
    # derive heterogeneous defaults of the right length.
    n = int(data["n_sbs"])
    if n < 1:
        raise ConfigError(f"env.n_sbs must be >= 1, got {n}")
    base_ues = (4, 6, 8, 10, 12, 14)
    if "ues_per_sbs" not in data:
        data["ues_per_sbs"] = tuple(base_ues[i % len(base_ues)] for i in range(n))
    if "traffic_scales" not in data:
        data["traffic_scales"] = tuple(
            float(x) for x in np.linspace(0.6, 1.6, n)
        ) if n > 1 else (1.0,)
    return data


def _build_section(name: str, cls, data: dict, defaulted: list[str]):
    field_names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in field_names:
            raise ConfigError(f"unknown key '{key}' in section '{name}'")
    data = {k: _coerce(v) for k, v in data.items()}
    if name == "env" and "n_sbs" in data:
        data = _default_env_lists(data)
    for field_name in sorted(field_names - set(data)):
        defaulted.append(f"{name}.{field_name}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc


def config_from_dict(raw: dict, source: str = "<dict>") -> tuple[ScenarioConfig, list[str]]:
    """Build a validated config from nested dicts; returns (config, defaulted keys)."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping of sections")
    for section in raw:
        if section not in _SECTIONS:
            raise ConfigError(
                f"{source}: unknown section '{section}' "
                f"(expected one of: {', '.join(_SECTIONS)})"
            )
    defaulted: list[str] = []
    built = {}
    for name, cls in _SECTIONS.items():
        section_data = raw.get(name, {})
        if section_data is None:
            section_data = {}
        if not isinstance(section_data, dict):
            raise ConfigError(f"{source}: section '{name}' must be a mapping")
        built[name] = _build_section(name, cls, dict(section_data), defaulted)
    return ScenarioConfig(**built), defaulted


def load_config(path: str | Path) -> tuple[ScenarioConfig, list[str]]:
    """Parse and validate a YAML scenario file; returns (config, defaulted keys)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}: invalid YAML{where}: {exc}") from exc
    try:
        return config_from_dict(raw, source=str(path))
    except ConfigError as exc:
        raise ConfigError(str(exc) if str(exc).startswith(str(path)) else f"{path}: {exc}")


def resolved_dict(config: ScenarioConfig) -> dict:
    """Plain nested dict of every resolved value (YAML-friendly types)."""

    def plain(value):
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        return value

    out = {}
    for name in _SECTIONS:
        section = getattr(config, name)
        out[name] = {
            f.name: plain(getattr(section, f.name)) for f in dataclasses.fields(section)
        }
    return out


def apply_overrides(
    config: ScenarioConfig,
    *,
    strategy: str | None = None,
    attack_kind: str | None = None,
    attackers: int | None = None,
    gamma: float | None = None,
    seed: int | None = None,
    out_dir: str | None = None,
    rounds: int | None = None,
    workers: int | None = None,
    schedule: tuple[int, ...] | None = None,
) -> ScenarioConfig:
    """Return a copy of the config with CLI-level overrides applied."""
    strategy_section = config.strategy
    if strategy is not None:
        strategy_section = dataclasses.replace(strategy_section, kind=strategy)
    attack_section = config.attack
    if attack_kind is not None:
        attack_section = dataclasses.replace(attack_section, kind=attack_kind)
    if attackers is not None:
        attack_section = dataclasses.replace(attack_section, attackers=attackers)
    if gamma is not None:
        attack_section = dataclasses.replace(attack_section, gamma=gamma)
    if schedule is not None:
        attack_section = dataclasses.replace(attack_section, schedule=schedule)
    run_section = config.run
    if seed is not None:
        run_section = dataclasses.replace(run_section, seed=seed)
    if out_dir is not None:
        run_section = dataclasses.replace(run_section, out_dir=out_dir)
    if rounds is not None:
        run_section = dataclasses.replace(run_section, rounds=rounds)
    if workers is not None:
        run_section = dataclasses.replace(run_section, workers=workers)
    return dataclasses.replace(
        config, strategy=strategy_section, attack=attack_section, run=run_section
    )

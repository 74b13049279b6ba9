"""Run configuration: environment, vehicle, learner, schedule and seeds.

Configs are JSON documents.  Unknown keys are rejected so that a typo in a
hyperparameter name fails loudly instead of silently using a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .agents import ALGORITHMS
from .env import EnvConfig
from .vehicle import VehicleParams
from .worldmap import load_map


class ConfigError(ValueError):
    pass


@dataclass
class AgentSection:
    algorithm: str = "sac"
    hidden_sizes: tuple[int, ...] = (256, 256)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"agent.algorithm must be one of {sorted(ALGORITHMS)}, got {self.algorithm!r}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("agent.hidden_sizes must be a non-empty list of positive widths")
        allowed = set(ALGORITHMS[self.algorithm]().get_params()) - {"hidden_sizes", "random_state", "warmup_steps"}
        unknown = sorted(set(self.params) - allowed)
        if unknown:
            raise ConfigError(f"agent.params: unknown key(s) {', '.join(unknown)} for {self.algorithm}")


@dataclass
class Schedule:
    episodes: int = 300
    episode_steps: int = 200
    warmup_steps: int = 1000
    eval_every: int = 0
    eval_episodes: int = 5
    final_eval_episodes: int = 5
    checkpoint_every: int = 50
    max_wall_seconds: float | None = None

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("schedule.episodes must be >= 0")
        if self.episode_steps < 1:
            raise ConfigError("schedule.episode_steps must be >= 1")
        for name in ("warmup_steps", "eval_every", "eval_episodes", "final_eval_episodes", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"schedule.{name} must be >= 0")


@dataclass
class Seeds:
    env_seed: int = 0
    agent_seed: int = 0
    eval_seed: int = 12345


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    agent: AgentSection = field(default_factory=AgentSection)
    schedule: Schedule = field(default_factory=Schedule)
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str = "runs/default"
    name: str = "run"

    def __post_init__(self):
        if self.env.episode_steps != self.schedule.episode_steps:
            # the schedule owns the step budget
            self.env = EnvConfig(**{**asdict(self.env), "episode_steps": self.schedule.episode_steps})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"]["hidden_sizes"] = list(self.agent.hidden_sizes)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        """Digest of everything that affects the learned parameters (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("name")
        d["schedule"].pop("max_wall_seconds")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def agent_params(self) -> dict:
        return {**self.agent.params, "hidden_sizes": self.agent.hidden_sizes,
                "warmup_steps": self.schedule.warmup_steps, "random_state": self.seeds.agent_seed}

    def make_agent(self):
        return ALGORITHMS[self.agent.algorithm](**self.agent_params())


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    top = {"env", "vehicle", "agent", "schedule", "seeds", "output_dir", "name"}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    sched = _section(Schedule, d.get("schedule"), "schedule")
    env_data = dict(d.get("env") or {})
    env_data.setdefault("episode_steps", sched.episode_steps)
    cfg = RunConfig(
        env=_section(EnvConfig, env_data, "env"),
        vehicle=_section(VehicleParams, d.get("vehicle"), "vehicle"),
        agent=_section(AgentSection, d.get("agent"), "agent"),
        schedule=sched,
        seeds=_section(Seeds, d.get("seeds"), "seeds"),
        output_dir=str(d.get("output_dir", "runs/default")),
        name=str(d.get("name", "run")),
    )
    try:
        load_map(cfg.env.map_file)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"env.map_file: {exc}") from None
    try:
        cfg.make_agent()._check_params()
    except ValueError as exc:
        raise ConfigError(f"agent: {exc}") from None
    return cfg


def bundled_config_names() -> list[str]:
    root = resources.files("agvrl") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(source) -> RunConfig:
    """Load a config from a path or the name of a bundled config (e.g. ``desk_sac``)."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    elif str(source) in bundled_config_names():
        text = (resources.files("agvrl") / "configs" / f"{source}.json").read_text()
    else:
        raise ConfigError(f"config not found: {source}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)

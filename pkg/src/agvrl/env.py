"""Mapless exploration task: range-only observations, shaped rewards, collision termination."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .vehicle import VehicleParams, VehicleState, omega_to_steer, step_kinematics
from .worldmap import WorldMap, collision_check, load_map, raycast, sample_spawn, uniform_beams

EXPLORE_RANGE_COEF = 0.0075
EXPLORE_SPEED_COEF = 1.5
EXPLORE_TURN_COEF = 0.6
SHADE_BONUS = 2.0
SHADE_BAND = (2.0, 2.5)
PROXIMITY_PENALTY = -50.0
PROXIMITY_LIMIT = 1.0


def reward_explore(r: float, v: float, omega: float) -> float:
    """``0.0075 r^2 + 1.5 v^2 - 0.6 omega^2``, evaluated left to right."""
    return EXPLORE_RANGE_COEF * r * r + EXPLORE_SPEED_COEF * v * v - EXPLORE_TURN_COEF * omega * omega


def reward_sar(r: float, v: float, omega: float) -> float:
    """Exploration reward plus a bonus in the 2.0-2.5 m shade band and a penalty under 1 m."""
    base = reward_explore(r, v, omega)
    if SHADE_BAND[0] < r < SHADE_BAND[1]:
        return base + SHADE_BONUS
    if r < PROXIMITY_LIMIT:
        return base + PROXIMITY_PENALTY
    return base


REWARDS = {"explore": reward_explore, "sar": reward_sar}


@dataclass
class EnvConfig:
    map_file: str = "env1"
    beams: int = 24
    max_range: float = 10.0
    dt: float = 0.1
    episode_steps: int = 1000
    reward: str = "explore"
    v_max: float = 2.0
    omega_max: float = 1.5
    clearance: float = 1.0
    footprint_radius: float = 0.3

    def __post_init__(self):
        if self.reward not in REWARDS:
            raise ValueError(f"reward must be one of {sorted(REWARDS)}, got {self.reward!r}")
        if self.beams < 1 or self.episode_steps < 1:
            raise ValueError("beams and episode_steps must be at least 1")
        if self.max_range <= 0 or self.dt <= 0:
            raise ValueError("max_range and dt must be positive")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError("v_max and omega_max must be positive")

    @property
    def obs_dim(self) -> int:
        return 2 * self.beams + 2

    def to_dict(self) -> dict:
        return asdict(self)


class StepOutcome(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class Observation:
    """Structured view of a flat observation vector."""

    ranges_now: np.ndarray
    ranges_prev: np.ndarray
    action_prev: np.ndarray

    @classmethod
    def from_vector(cls, vec, beams: int) -> "Observation":
        vec = np.asarray(vec)
        return cls(vec[:beams], vec[beams:2 * beams], vec[2 * beams:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.ranges_now, self.ranges_prev, self.action_prev])


@dataclass
class ExplorationEnv:
    """Single-vehicle exploration MDP with a gym-like ``reset``/``step`` interface.

    Actions are normalized to ``[-1, 1]^2`` and mapped affinely onto
    ``v in [0, v_max]`` and ``omega in [-omega_max, omega_max]``.
    """

    config: EnvConfig = field(default_factory=EnvConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    world: WorldMap | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.world is None:
            self.world = load_map(self.config.map_file)
        if self.config.v_max > self.vehicle.max_speed:
            raise ValueError("v_max exceeds the vehicle's max_speed")
        self.beam_angles = uniform_beams(self.config.beams)
        self.rng = np.random.default_rng(self.seed)
        self._reward = REWARDS[self.config.reward]
        self.state: VehicleState | None = None
        self.steps = 0
        self.done = True
        self._ranges = None
        self._last_action = np.zeros(2)

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    act_dim = 2

    def denormalize(self, action) -> tuple[float, float]:
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        v = (a[0] + 1.0) * 0.5 * self.config.v_max
        omega = a[1] * self.config.omega_max
        return float(v), float(omega)

    def normalize(self, v: float, omega: float) -> np.ndarray:
        return np.array([2.0 * v / self.config.v_max - 1.0, omega / self.config.omega_max])

    def scan(self) -> np.ndarray:
        return raycast(self.world, self.state.pose, self.beam_angles, self.config.max_range).ranges

    def _observation(self, ranges_prev) -> np.ndarray:
        m = self.config.max_range
        return np.concatenate([self._ranges / m, ranges_prev / m, self._last_action])

    def reset(self, seed: int | None = None, pose=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if pose is None:
            pose = sample_spawn(self.world, self.rng, self.config.clearance)
        self.state = VehicleState(float(pose[0]), float(pose[1]), float(pose[2]), 0.0)
        self.steps = 0
        self.done = False
        self._last_action = np.zeros(2)
        self._ranges = self.scan()
        return self._observation(self._ranges)

    def step(self, action) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode is finished; call reset() first")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        v, omega = self.denormalize(a)
        delta = omega_to_steer(v, omega, self.vehicle)
        self.state = step_kinematics(self.state, v, delta, self.config.dt, self.vehicle)
        self.steps += 1
        prev = self._ranges
        self._ranges = self.scan()
        self._last_action = a
        min_range = float(self._ranges.min())
        reward = self._reward(min_range, v, omega)
        collided = collision_check(self.world, self.state.pose, self.config.footprint_radius)
        truncated = self.steps >= self.config.episode_steps
        self.done = collided or truncated
        info = {"min_range": min_range, "collided": collided, "truncated": truncated and not collided,
                "pose": self.state.pose, "v": v, "omega": omega}
        return StepOutcome(self._observation(prev), float(reward), self.done, info)

    def get_rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_rng_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state

"""Kinematic bicycle model of a small Ackermann-steered vehicle."""

from __future__ import annotations

import math
from dataclasses import dataclass

WHEELBASE = 0.32


@dataclass(frozen=True)
class VehicleParams:
    l_f: float = WHEELBASE / 2
    l_r: float = WHEELBASE / 2
    max_speed: float = 2.0
    max_steer: float = 0.4
    footprint_radius: float = 0.3

    def __post_init__(self):
        if self.l_f <= 0 or self.l_r <= 0:
            raise ValueError("l_f and l_r must be positive")
        if not 0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must lie in (0, pi/2)")
        if self.max_speed <= 0 or self.footprint_radius <= 0:
            raise ValueError("max_speed and footprint_radius must be positive")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.psi)


def wrap_angle(a: float) -> float:
    """Map an angle to ``[-pi, pi)``; in-range angles pass through untouched."""
    if -math.pi <= a < math.pi:
        return a
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if w >= math.pi else w


def slip_angle(delta: float, params: VehicleParams) -> float:
    return math.atan(params.l_r / (params.l_f + params.l_r) * math.tan(delta))


def step_kinematics(state: VehicleState, v: float, delta: float, dt: float,
                    params: VehicleParams) -> VehicleState:
    """One explicit-Euler step of the bicycle model at commanded speed and steer."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    beta = slip_angle(delta, params)
    heading = state.psi + beta
    x = state.x + v * math.cos(heading) * dt
    y = state.y + v * math.sin(heading) * dt
    psi = state.psi + (v / params.l_r) * math.sin(beta) * dt
    return VehicleState(x, y, wrap_angle(psi), v)


def omega_to_steer(v: float, omega: float, params: VehicleParams) -> float:
    """Steering angle that yields yaw rate ``omega`` at speed ``v`` (saturating)."""
    if abs(v) < 1e-6 or omega == 0:
        return 0.0
    s = max(-1.0, min(1.0, omega * params.l_r / v))
    delta = math.atan(math.tan(math.asin(s)) * (params.l_f + params.l_r) / params.l_r)
    return max(-params.max_steer, min(params.max_steer, delta))


def max_yaw_rate(v: float, params: VehicleParams) -> float:
    return abs(v) / params.l_r * math.sin(slip_angle(params.max_steer, params))

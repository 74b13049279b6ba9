"""Episode loop shared by ``fit`` and the training harness."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .replay import Transition


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    steps: int
    collided: bool
    wall_time: float

    def row(self) -> list:
        return [self.episode, repr(self.ret), self.steps, int(self.collided), f"{self.wall_time:.3f}"]


def run_episode(agent, env, learn: bool = True, mode: str = "explore", record=None):
    """Play one episode; returns ``(return, steps, collided, last_diagnostics)``.

    ``record`` (a list) receives ``(t, x, y, psi, reward)`` rows starting with the spawn pose.
    """
    s = env.reset()
    ret = 0.0
    diag = None
    if record is not None:
        x, y, psi = env.state.pose
        record.append((0.0, x, y, psi, 0.0))
    while True:
        if learn and agent.total_steps_ < agent.warmup_steps:
            a = agent.random_action()
        else:
            a = agent.select_action(s, mode)
        out = env.step(a)
        ret += out.reward
        if learn:
            agent.observe(Transition(s, a, out.reward, out.observation, out.info["collided"]))
            agent.total_steps_ += 1
            if agent.ready():
                diag = agent.update()
        if record is not None:
            x, y, psi = out.info["pose"]
            record.append((env.steps * env.config.dt, x, y, psi, out.reward))
        s = out.observation
        if out.done:
            return ret, env.steps, bool(out.info["collided"]), diag


def run_episodes(agent, env, episodes: int, start: int = 0, on_episode=None, should_stop=None):
    """Train for ``episodes`` episodes; ``on_episode(log, diag)`` is called after each one."""
    logs = []
    for ep in range(start, start + episodes):
        if should_stop is not None and should_stop():
            break
        t0 = time.perf_counter()
        ret, steps, collided, diag = run_episode(agent, env)
        log = EpisodeLog(ep, float(ret), int(steps), collided, time.perf_counter() - t0)
        logs.append(log)
        if on_episode is not None:
            on_episode(log, diag)
    return logs


def moving_average(series, order: int = 50) -> np.ndarray:
    """Trailing mean over the last ``min(i + 1, order)`` values."""
    if order < 1:
        raise ValueError("order must be at least 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, x.size + 1)
    lo = np.maximum(i - order, 0)
    return (c[i] - c[lo]) / (i - lo)

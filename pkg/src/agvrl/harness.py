"""Training and evaluation runs with logs, checkpoints and reports on disk.

Layout of a run directory::

    config.json        resolved config
    episodes.csv       episode,return,steps,collided,wall_time (append-only)
    evals.csv          periodic exploit-mode evaluations on a held-out seed
    checkpoints/       ckpt_<episodes done>.json (+ .buffer.npz), latest.txt
    final.json         final checkpoint (weights and optimizer state)
    final_eval/        post-training trajectories and their report
    summary.json       moving averages, convergence annotation, status
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checkpoint import agent_from_dict, load_checkpoint, read_checkpoint, save_checkpoint
from .config import RunConfig
from .env import EnvConfig, ExplorationEnv
from .metrics import Trajectory, score_trajectory, write_trajectory_csv
from .training import EpisodeLog, moving_average, run_episode
from .vehicle import VehicleParams

LOG_HEADER = ["episode", "return", "steps", "collided", "wall_time"]
EVAL_HEADER = ["episode", "mean_return", "mean_steps", "collisions"]
MA_ORDER = 50


class TrainingAborted(RuntimeError):
    pass


class IncompatibleCheckpoint(ValueError):
    pass


# ---------------------------------------------------------------- logs


def read_episode_log(path) -> list[EpisodeLog]:
    """Parse an episode log; malformed rows raise ``ValueError`` naming the line."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if [h.strip() for h in header] != LOG_HEADER:
            raise ValueError(f"{path}: line 1: expected header {','.join(LOG_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LOG_HEADER):
                raise ValueError(f"{path}: line {lineno}: expected {len(LOG_HEADER)} fields, got {len(row)}")
            try:
                rows.append(EpisodeLog(int(row[0]), float(row[1]), int(row[2]), bool(int(row[3])), float(row[4])))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed row {','.join(row)!r}") from None
    return rows


def _write_rows(path: Path, header, rows, mode="w"):
    new = mode == "w" or not path.exists() or path.stat().st_size == 0
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        w.writerows(rows)


def convergence_episode(ma: np.ndarray, fraction: float = 0.95) -> int | None:
    """First episode whose moving average is within ``1 - fraction`` of the final value."""
    if ma.size == 0:
        return None
    final = ma[-1]
    threshold = final - (1.0 - fraction) * abs(final)
    return int(np.argmax(ma >= threshold))


def summarize(logs: list[EpisodeLog]) -> dict:
    ret = np.array([l.ret for l in logs])
    steps = np.array([l.steps for l in logs], dtype=float)
    ma_ret = moving_average(ret, MA_ORDER)
    ma_steps = moving_average(steps, MA_ORDER)
    return {
        "episodes": len(logs),
        "ma_order": MA_ORDER,
        "ma_return_final": float(ma_ret[-1]) if len(logs) else None,
        "ma_steps_final": float(ma_steps[-1]) if len(logs) else None,
        "first50_mean_return": float(ret[:MA_ORDER].mean()) if len(logs) else None,
        "best_ma_return": float(ma_ret.max()) if len(logs) else None,
        "collisions": int(sum(l.collided for l in logs)),
        "convergence_episode": convergence_episode(ma_ret),
        "convergence_rule": "first episode where the order-50 moving-average return reaches 95% of its final value",
    }


# ---------------------------------------------------------------- evaluation


def _episode_report(agent, env, record_path=None) -> dict:
    rows = []
    ret, steps, collided, _ = run_episode(agent, env, learn=False, mode="exploit", record=rows)
    if record_path is not None:
        write_trajectory_csv(record_path, rows)
    arr = np.array(rows)
    traj = Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], reward=arr[:, 4])
    scores = score_trajectory(traj)
    return {"return": float(ret), "steps": int(steps), "collided": bool(collided), "eqs": scores["eqs"],
            "ees": scores["ees"], "path_length": scores["path_length"],
            "reward_sum": float(math.fsum(arr[1:, 4]))}


def run_evaluation(agent, env_config: EnvConfig, episodes: int, seed: int, out=None, vehicle=None) -> dict:
    env = ExplorationEnv(env_config, **({"vehicle": vehicle} if vehicle is not None else {}), seed=seed)
    if env.obs_dim != agent.obs_dim_:
        raise IncompatibleCheckpoint(
            f"checkpoint expects {agent.obs_dim_} observation features, env provides {env.obs_dim} "
            f"({env_config.beams} beams)")
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(episodes):
        rec = out / f"trajectory_{k:03d}.csv" if out is not None else None
        rows.append({"episode": k, **_episode_report(agent, env, rec)})
    report = {"map": env_config.map_file, "seed": seed, "episodes": rows, "summary": _report_summary(rows)}
    if out is not None:
        (out / "report.json").write_text(json.dumps(report, indent=2))
        _write_rows(out / "report.csv", ["episode", "steps", "collided", "return", "eqs", "ees", "path_length"],
                    [[r["episode"], r["steps"], int(r["collided"]), repr(r["return"]), repr(r["eqs"]),
                      "" if r["ees"] is None else repr(r["ees"]), repr(r["path_length"])] for r in rows])
    return report


def _report_summary(rows) -> dict:
    if not rows:
        return {"mean_steps": None, "mean_eqs": None, "mean_ees": None, "collision_free": 0}
    ees = [r["ees"] for r in rows if r["ees"] is not None]
    return {"mean_steps": float(np.mean([r["steps"] for r in rows])),
            "mean_return": float(np.mean([r["return"] for r in rows])),
            "mean_eqs": float(np.mean([r["eqs"] for r in rows])),
            "mean_ees": float(np.mean(ees)) if ees else None,
            "collision_free": int(sum(not r["collided"] for r in rows))}


def evaluate(checkpoint, map_file=None, episodes: int = 10, seed: int = 0, out=None, **env_overrides) -> dict:
    """Exploit-mode evaluation of a saved agent, optionally on a different map.

    The environment is rebuilt from the config stored in the checkpoint with
    ``map_file`` and ``env_overrides`` applied on top.
    """
    doc = read_checkpoint(checkpoint)
    agent = agent_from_dict(doc)
    env_dict = dict(doc.get("env") or {})
    if map_file is not None:
        env_dict["map_file"] = str(map_file)
    env_dict.update(env_overrides)
    vehicle = (doc.get("extra") or {}).get("vehicle")
    return run_evaluation(agent, EnvConfig(**env_dict), episodes, seed, out,
                          VehicleParams(**vehicle) if vehicle else None)


# ---------------------------------------------------------------- training


def _latest_checkpoint(ckpt_dir: Path) -> Path | None:
    marker = ckpt_dir / "latest.txt"
    if not marker.exists():
        return None
    path = ckpt_dir / marker.read_text().strip()
    return path if path.exists() else None


def train(config: RunConfig, resume: bool = False, output_dir=None, max_wall_seconds=None,
          on_episode=None) -> dict:
    """Run (or continue) the scheduled training and return the summary dict.

    The wall-clock limit is checked between episodes; when it trips, a
    resumable checkpoint is written and the summary status is ``interrupted``.
    A non-finite loss writes status ``aborted`` and raises
    :class:`TrainingAborted`; the previous checkpoint is left in place.
    """
    out = Path(output_dir or config.output_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    limit = max_wall_seconds if max_wall_seconds is not None else config.schedule.max_wall_seconds
    sched = config.schedule
    env = ExplorationEnv(config.env, config.vehicle, seed=config.seeds.env_seed)
    eval_env_cfg = config.env
    log_path = out / "episodes.csv"
    chash = config.hash()

    if resume and (out / "summary.json").exists():
        previous = json.loads((out / "summary.json").read_text())
        if previous.get("status") == "completed" and previous.get("config_hash") == chash:
            return previous

    start = 0
    latest = _latest_checkpoint(ckpt_dir) if resume else None
    if latest is not None:
        agent, doc = load_checkpoint(latest, resume=True)
        if doc.get("config_hash") != chash:
            raise IncompatibleCheckpoint(f"{latest} was written for a different config")
        env.set_rng_state(doc["resume"]["env_rng"])
        start = int(doc["extra"]["episodes_done"])
        kept = [l for l in read_episode_log(log_path) if l.episode < start] if log_path.exists() else []
        _write_rows(log_path, LOG_HEADER, [l.row() for l in kept])
        eval_path = out / "evals.csv"
        if eval_path.exists():
            with open(eval_path) as fh:
                evals = [r for r in csv.reader(fh)][1:]
            _write_rows(eval_path, EVAL_HEADER, [r for r in evals if r and int(r[0]) < start])
        logs = kept
    else:
        agent = config.make_agent().initialize(env.obs_dim, env.act_dim)
        _write_rows(log_path, LOG_HEADER, [])
        _write_rows(out / "evals.csv", EVAL_HEADER, [])
        for stale in ckpt_dir.glob("ckpt_*"):
            stale.unlink()
        (ckpt_dir / "latest.txt").unlink(missing_ok=True)
        logs = []
    (out / "config.json").write_text(config.dumps())

    def checkpoint(done: int) -> Path:
        path = ckpt_dir / f"ckpt_{done:06d}.json"
        save_checkpoint(agent, path, chash, config.env.to_dict(),
                        {"episodes_done": done, "vehicle": asdict(config.vehicle)},
                        resume=True, env_rng_state=env.get_rng_state())
        previous = _latest_checkpoint(ckpt_dir)
        (ckpt_dir / "latest.txt").write_text(path.name)
        if previous is not None and previous != path:
            previous.unlink(missing_ok=True)
            (ckpt_dir / (previous.stem + ".buffer.npz")).unlink(missing_ok=True)
        return path

    t_start = time.perf_counter()
    status = "completed"
    for ep in range(start, sched.episodes):
        if limit is not None and time.perf_counter() - t_start >= limit:
            checkpoint(ep)
            status = "interrupted"
            break
        t0 = time.perf_counter()
        try:
            ret, steps, collided, diag = run_episode(agent, env)
        except FloatingPointError as exc:
            _write_summary(out, config, logs, agent, "aborted", str(exc))
            raise TrainingAborted(f"episode {ep}: {exc}; last good checkpoint kept in {ckpt_dir}") from None
        log = EpisodeLog(ep, float(ret), int(steps), collided, time.perf_counter() - t0)
        logs.append(log)
        _write_rows(log_path, LOG_HEADER, [log.row()], mode="a")
        if on_episode is not None:
            on_episode(log, diag)
        done = ep + 1
        if sched.eval_every and done % sched.eval_every == 0:
            rep = run_evaluation(agent, eval_env_cfg, sched.eval_episodes, config.seeds.eval_seed,
                                 vehicle=config.vehicle)
            s = rep["summary"]
            _write_rows(out / "evals.csv", EVAL_HEADER,
                        [[ep, repr(s.get("mean_return")), repr(s["mean_steps"]),
                          sched.eval_episodes - s["collision_free"]]], mode="a")
        if sched.checkpoint_every and done % sched.checkpoint_every == 0 and done < sched.episodes:
            checkpoint(done)

    final_eval = None
    if status == "completed" and sched.episodes > 0:
        save_checkpoint(agent, out / "final.json", chash, config.env.to_dict(),
                        {"episodes_done": sched.episodes, "vehicle": asdict(config.vehicle)})
        if sched.final_eval_episodes:
            final_eval = run_evaluation(agent, eval_env_cfg, sched.final_eval_episodes,
                                        config.seeds.eval_seed, out / "final_eval", config.vehicle)
    summary = _write_summary(out, config, logs, agent, status, final_eval=final_eval)
    if status == "completed" and logs:
        from .plotting import render_log_svg

        (out / "curves.svg").write_text(render_log_svg(logs))
    return summary


def _write_summary(out: Path, config: RunConfig, logs, agent, status, error=None, final_eval=None) -> dict:
    summary = {
        "name": config.name,
        "algorithm": config.agent.algorithm,
        "config_hash": config.hash(),
        "status": status,
        **summarize(logs),
        "total_steps": agent.total_steps_,
        "transitions_pushed": agent.buffer_.pushed,
        "updates": agent.n_updates_,
        "wall_time": float(sum(l.wall_time for l in logs)),
    }
    if error:
        summary["error"] = error
    if final_eval is not None:
        summary["final_eval"] = {"seed": final_eval["seed"], **final_eval["summary"],
                                 "episodes": [{k: r[k] for k in ("steps", "collided", "return", "eqs", "ees")}
                                              for r in final_eval["episodes"]]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary

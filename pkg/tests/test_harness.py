import json
import math
from pathlib import Path

import numpy as np
import pytest

from agvrl.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from agvrl.cli import main
from agvrl.config import ConfigError, config_from_dict, load_config
from agvrl.harness import (
    IncompatibleCheckpoint,
    TrainingAborted,
    convergence_episode,
    evaluate,
    read_episode_log,
    train,
)
from agvrl.metrics import read_trajectory_csv
from agvrl.plotting import render_log_svg, render_trajectory_svg
from agvrl.training import EpisodeLog, moving_average
from agvrl.worldmap import load_map


def small_config(tmp_path, algorithm="sac", **schedule):
    sched = {"episodes": 6, "episode_steps": 40, "warmup_steps": 50, "checkpoint_every": 2,
             "final_eval_episodes": 2, **schedule}
    return config_from_dict({
        "name": "t", "output_dir": str(tmp_path / "run"), "env": {"map_file": "tiny10"},
        "agent": {"algorithm": algorithm, "hidden_sizes": [16, 16], "params": {"batch_size": 16}},
        "schedule": sched, "seeds": {"env_seed": 3, "agent_seed": 4},
    })


def log_without_wall_time(path):
    return [(l.episode, l.ret, l.steps, l.collided) for l in read_episode_log(path)]


# ---------------------------------------------------------------- moving average


def test_moving_average_examples():
    np.testing.assert_array_equal(moving_average([3.0] * 10), [3.0] * 10)
    x = np.random.default_rng(0).normal(size=20)
    np.testing.assert_allclose(moving_average(x, 1), x, rtol=0, atol=1e-15)
    ramp = np.arange(1, 101, dtype=float)
    assert moving_average(ramp, 50)[99] == pytest.approx(75.5, abs=1e-12)
    assert moving_average(ramp, 50)[9] == pytest.approx(5.5, abs=1e-12)
    assert moving_average([]).size == 0
    with pytest.raises(ValueError):
        moving_average([1.0], 0)


def test_convergence_annotation():
    ma = np.array([0.0, 50.0, 96.0, 99.0, 100.0])
    assert convergence_episode(ma) == 2
    assert convergence_episode(np.array([])) is None


# ---------------------------------------------------------------- config


def test_bundled_configs_parse():
    for name in ("desk_ddpg", "desk_td3", "desk_sac"):
        cfg = load_config(name)
        assert cfg.env.map_file == "tiny10" and cfg.schedule.episodes == 300
    for alg in ("ddpg", "td3", "sac"):
        e1, e2 = load_config(f"fullscale_env1_{alg}"), load_config(f"fullscale_env2_{alg}")
        assert (e1.schedule.episodes, e1.env.episode_steps) == (10_000, 1000)
        assert (e2.schedule.episodes, e2.env.episode_steps) == (20_000, 2000)
        for cfg in (e1, e2):
            p = cfg.agent.params
            assert (p["gamma"], p["actor_lr"], p["critic_lr"], p["tau"], p["batch_size"], p["buffer_size"]) == (
                0.995, 5e-5, 5e-4, 0.001, 128, 1_000_000)
            assert cfg.agent.hidden_sizes == (256, 256)


@pytest.mark.parametrize(
    "patch, match",
    [
        ({"schedule": {"episodes": -1}}, "episodes"),
        ({"schedule": {"episode_steps": 0}}, "episode_steps"),
        ({"env": {"map_file": "nowhere.json"}}, "map_file"),
        ({"agent": {"algorithm": "ppo"}}, "algorithm"),
        ({"agent": {"algorithm": "sac", "params": {"lr": 1}}}, "unknown"),
        ({"agent": {"algorithm": "sac", "params": {"gamma": 2.0}}}, "gamma"),
        ({"bogus": 1}, "unknown top-level"),
    ],
)
def test_config_errors(patch, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(patch)


def test_config_hash_ignores_output_location(tmp_path):
    a = small_config(tmp_path)
    b = small_config(tmp_path / "elsewhere")
    assert a.hash() == b.hash()
    assert config_from_dict(json.loads(a.dumps())).hash() == a.hash()


# ---------------------------------------------------------------- train


def test_zero_episodes(tmp_path):
    cfg = small_config(tmp_path, episodes=0)
    summary = train(cfg)
    out = Path(cfg.output_dir)
    assert read_episode_log(out / "episodes.csv") == []
    assert summary["episodes"] == 0 and summary["status"] == "completed"
    assert not list((out / "checkpoints").glob("ckpt_*")) and not (out / "final.json").exists()
    assert json.loads((out / "summary.json").read_text())["ma_return_final"] is None


def test_training_run_artifacts(tmp_path):
    cfg = small_config(tmp_path, eval_every=3, eval_episodes=2)
    summary = train(cfg)
    out = Path(cfg.output_dir)
    logs = read_episode_log(out / "episodes.csv")
    assert [l.episode for l in logs] == list(range(6))
    assert all(1 <= l.steps <= 40 and math.isfinite(l.ret) for l in logs)
    assert summary["total_steps"] == sum(l.steps for l in logs) == summary["transitions_pushed"]
    assert (out / "final.json").exists() and (out / "curves.svg").exists()
    assert len((out / "evals.csv").read_text().splitlines()) == 3
    # trajectory rewards add up to the logged return
    report = json.loads((out / "final_eval" / "report.json").read_text())
    for k, row in enumerate(report["episodes"]):
        traj = read_trajectory_csv(out / "final_eval" / f"trajectory_{k:03d}.csv")
        assert math.fsum(traj.reward[1:]) == pytest.approx(row["return"], abs=1e-9)
        assert len(traj) == row["steps"] + 1


@pytest.mark.parametrize("algorithm", ["ddpg", "td3", "sac"])
def test_same_config_twice_is_bit_identical(tmp_path, algorithm):
    a = small_config(tmp_path / "a", algorithm)
    b = small_config(tmp_path / "b", algorithm)
    train(a)
    train(b)
    pa, pb = Path(a.output_dir), Path(b.output_dir)
    assert log_without_wall_time(pa / "episodes.csv") == log_without_wall_time(pb / "episodes.csv")
    assert (pa / "final.json").read_bytes() == (pb / "final.json").read_bytes()


def test_resume_matches_uninterrupted_run(tmp_path):
    straight = small_config(tmp_path / "a")
    train(straight)

    # interrupted before the first episode, then resumed
    early = small_config(tmp_path / "b")
    assert train(early, max_wall_seconds=0.0)["status"] == "interrupted"
    assert train(early, resume=True)["status"] == "completed"

    # killed after episode 5 was logged: only the episode-4 checkpoint survives
    late = small_config(tmp_path / "c")
    train(late)
    out_c = Path(late.output_dir)
    (out_c / "summary.json").unlink()
    (out_c / "final.json").unlink()
    assert (out_c / "checkpoints" / "latest.txt").read_text() == "ckpt_000004.json"
    train(late, resume=True)

    ref = log_without_wall_time(Path(straight.output_dir) / "episodes.csv")
    final = (Path(straight.output_dir) / "final.json").read_bytes()
    for cfg in (early, late):
        assert log_without_wall_time(Path(cfg.output_dir) / "episodes.csv") == ref
        assert (Path(cfg.output_dir) / "final.json").read_bytes() == final


def test_time_limit_checkpoint_then_resume(tmp_path):
    cfg = small_config(tmp_path, episodes=8, checkpoint_every=0)
    summary = train(cfg, max_wall_seconds=1e-9)
    assert summary["status"] == "interrupted" and summary["episodes"] == 0
    assert (Path(cfg.output_dir) / "checkpoints" / "latest.txt").read_text() == "ckpt_000000.json"
    seen = []
    summary = train(cfg, resume=True, on_episode=lambda log, diag: seen.append(log.episode))
    assert seen == list(range(8)) and summary["status"] == "completed"
    # resuming a finished run is a no-op
    assert train(cfg, resume=True, on_episode=lambda log, diag: seen.append(-1)) == summary
    assert -1 not in seen


def test_resume_rejects_other_config(tmp_path):
    cfg = small_config(tmp_path)
    train(cfg, max_wall_seconds=0.0)
    other = small_config(tmp_path, episode_steps=41)
    with pytest.raises(IncompatibleCheckpoint):
        train(other, resume=True)


def test_non_finite_loss_aborts_keeping_checkpoint(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, episodes=6, checkpoint_every=2)
    from agvrl import agents

    original = agents.SACAgent._update

    def poisoned(self, batch, *a, **k):
        if self.total_steps_ > 150:
            raise FloatingPointError("non-finite critic loss")
        return original(self, batch, *a, **k)

    monkeypatch.setattr(agents.SACAgent, "_update", poisoned)
    with pytest.raises(TrainingAborted):
        train(cfg)
    out = Path(cfg.output_dir)
    assert json.loads((out / "summary.json").read_text())["status"] == "aborted"
    latest = (out / "checkpoints" / (out / "checkpoints" / "latest.txt").read_text())
    agent, doc = load_checkpoint(latest, resume=True)
    assert all(np.all(np.isfinite(n.theta)) for n in agent.networks().values())


# ---------------------------------------------------------------- checkpoints and evaluation


@pytest.mark.parametrize("algorithm", ["ddpg", "td3", "sac"])
def test_checkpoint_round_trip_actions(tmp_path, algorithm):
    cfg = small_config(tmp_path, algorithm, episodes=3)
    train(cfg)
    agent, _ = load_checkpoint(Path(cfg.output_dir) / "final.json")
    again = save_checkpoint(agent, tmp_path / "copy.json")
    agent2, _ = load_checkpoint(again)
    battery = np.random.default_rng(0).uniform(0, 1, (64, agent.obs_dim_))
    assert agent.predict(battery).tobytes() == agent2.predict(battery).tobytes()
    for name, net in agent.networks().items():
        assert net.theta.tobytes() == agent2.networks()[name].theta.tobytes()


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"format\": 7}")
    with pytest.raises(CheckpointError, match="format"):
        load_checkpoint(bad)
    bad.write_text("not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_untrained_agent_report(tmp_path):
    cfg = small_config(tmp_path)
    agent = cfg.make_agent().initialize(cfg.env.obs_dim, 2)
    ckpt = save_checkpoint(agent, tmp_path / "fresh.json", env_config=cfg.env.to_dict())
    report = evaluate(ckpt, "transfer12", episodes=4, seed=0, out=tmp_path / "ev")
    assert len(report["episodes"]) == 4
    for row in report["episodes"]:
        assert math.isfinite(row["eqs"]) and (row["ees"] is None or math.isfinite(row["ees"]))
    assert len((tmp_path / "ev" / "report.csv").read_text().splitlines()) == 5


def test_eval_dimension_mismatch(tmp_path):
    cfg = small_config(tmp_path)
    agent = cfg.make_agent().initialize(cfg.env.obs_dim, 2)
    ckpt = save_checkpoint(agent, tmp_path / "fresh.json", env_config=cfg.env.to_dict())
    with pytest.raises(IncompatibleCheckpoint, match="observation"):
        evaluate(ckpt, episodes=1, beams=16)


def test_eval_reproduces_train_time_statistics(tmp_path):
    cfg = small_config(tmp_path, episodes=4)
    summary = train(cfg)
    report = evaluate(Path(cfg.output_dir) / "final.json", "tiny10", episodes=2, seed=cfg.seeds.eval_seed)
    logged = summary["final_eval"]["episodes"]
    for a, b in zip(logged, report["episodes"]):
        assert (a["steps"], a["collided"], a["return"], a["eqs"], a["ees"]) == (
            b["steps"], b["collided"], b["return"], b["eqs"], b["ees"])


# ---------------------------------------------------------------- plots


def test_empty_log_svg_has_axes_and_no_data():
    svg = render_log_svg([])
    assert svg.startswith("<svg") and 'class="axis"' in svg and "<path" not in svg


def test_log_svg_deterministic_with_moving_average():
    logs = [EpisodeLog(i, math.sin(i), 10 + i, False, 0.1) for i in range(80)]
    a, b = render_log_svg(logs), render_log_svg(list(logs))
    assert a == b
    assert a.count('class="moving-average"') == 2 and a.count('class="raw"') == 2


def test_trajectory_svg_structure(tmp_path):
    cfg = small_config(tmp_path, episodes=2, final_eval_episodes=3)
    train(cfg)
    trajs = [read_trajectory_csv(p) for p in sorted((Path(cfg.output_dir) / "final_eval").glob("trajectory_*.csv"))]
    world = load_map("transfer12")
    svg = render_trajectory_svg(world, trajs)
    assert svg.count('class="trajectory"') == 3
    assert svg.count('class="obstacle"') == len(world.obstacles)
    assert svg.count('class="spawn"') == 1 and 'class="annulus"' in svg
    assert svg == render_trajectory_svg(world, trajs)


def test_malformed_log_reports_line(tmp_path):
    p = tmp_path / "episodes.csv"
    p.write_text("episode,return,steps,collided,wall_time\n0,1.0,5,0,0.1\n1,oops,5,0,0.1\n")
    with pytest.raises(ValueError, match="line 3"):
        read_episode_log(p)


# ---------------------------------------------------------------- CLI


def test_cli_end_to_end(tmp_path, capsys):
    cfg = small_config(tmp_path, episodes=3)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.dumps())
    assert main(["train", "--config", str(cfg_path), "--quiet"]) == 0
    run = Path(cfg.output_dir)
    assert main(["eval", "--checkpoint", str(run / "final.json"), "--map", "transfer12",
                 "--episodes", "2", "--seed", "1", "--out", str(tmp_path / "ev")]) == 0
    traj = tmp_path / "ev" / "trajectory_000.csv"
    capsys.readouterr()
    assert main(["score", "--trajectory", str(traj), "--origin", "1,1", "--formula", "literal"]) == 0
    scored = json.loads(capsys.readouterr().out)
    assert scored["eqs"] >= 1
    assert main(["plot", "--log", str(run / "episodes.csv"), "--out", str(tmp_path / "c.svg")]) == 0
    assert main(["plot", "--trajectory", str(traj), "--map", "transfer12", "--out", str(tmp_path / "t.svg")]) == 0
    assert (tmp_path / "t.svg").read_text().count('class="trajectory"') == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--config", "missing.json"],
        ["eval", "--checkpoint", "missing.json", "--out", "x"],
        ["score", "--trajectory", "missing.csv"],
        ["plot", "--trajectory", "missing.csv", "--out", "x.svg"],
    ],
)
def test_cli_errors_exit_nonzero(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_cli_bad_origin_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["score", "--trajectory", "t.csv", "--origin", "nope"])
    assert exc.value.code != 0

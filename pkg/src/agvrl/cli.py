"""Command line entry point: ``agvrl train|eval|score|plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .metrics import DEFAULT_ANNULUS, DEFAULT_CELL_AREA, FORMULAS, read_trajectory_csv, score_trajectory


def _origin(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"origin must look like X,Y, got {text!r}") from None
    return x, y


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agvrl", description="Off-policy DRL for mapless AGV exploration.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an agent from a JSON run config")
    t.add_argument("--config", required=True, help="config file or bundled config name (e.g. desk_sac)")
    t.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    t.add_argument("--out", help="override the config's output_dir")
    t.add_argument("--max-seconds", type=float, help="wall-clock limit; a resumable checkpoint is written on expiry")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint in exploit mode")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--map", help="map file or bundled map name (default: the training map)")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="directory for report.json, report.csv and trajectories")

    s = sub.add_parser("score", help="EQS/EES of a trajectory CSV")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--origin", type=_origin, help="spawn point X,Y (default: first sample)")
    s.add_argument("--cell-area", type=float, default=DEFAULT_CELL_AREA)
    s.add_argument("--annulus", type=float, default=DEFAULT_ANNULUS)
    s.add_argument("--formula", choices=FORMULAS, default="cells")
    s.add_argument("--coverage", choices=("path", "samples"), default="path")

    g = sub.add_parser("plot", help="render an episode log or trajectories to SVG")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--log", help="episodes.csv from a training run")
    src.add_argument("--trajectory", nargs="+", help="one or more trajectory CSVs")
    g.add_argument("--map", help="map for trajectory plots")
    g.add_argument("--origin", type=_origin)
    g.add_argument("--out", required=True)
    return p


def _train(args) -> int:
    from .config import load_config
    from .harness import train

    cfg = load_config(args.config)

    def progress(log, diag):
        if not args.quiet:
            print(f"episode {log.episode} return {log.ret:.2f} steps {log.steps} collided {int(log.collided)}",
                  flush=True)

    summary = train(cfg, resume=args.resume, output_dir=args.out, max_wall_seconds=args.max_seconds,
                    on_episode=progress)
    print(json.dumps({k: summary[k] for k in ("status", "episodes", "ma_return_final", "convergence_episode")}))
    return 0


def _eval(args) -> int:
    from .harness import evaluate

    report = evaluate(args.checkpoint, args.map, args.episodes, args.seed, args.out)
    print(f"{'episode':>7} {'steps':>6} {'collided':>8} {'EQS':>8} {'EES':>8}")
    for r in report["episodes"]:
        ees = "-" if r["ees"] is None else f"{r['ees']:.3f}"
        print(f"{r['episode']:>7} {r['steps']:>6} {int(r['collided']):>8} {r['eqs']:>8.1f} {ees:>8}")
    return 0


def _score(args) -> int:
    traj = read_trajectory_csv(args.trajectory, args.origin)
    res = score_trajectory(traj, args.cell_area, args.annulus, args.formula, args.coverage)
    print(json.dumps(res))
    return 0


def _plot(args) -> int:
    from .plotting import render_log_svg, render_trajectory_svg

    if args.log:
        from .harness import read_episode_log

        svg = render_log_svg(read_episode_log(args.log))
    else:
        from .worldmap import load_map

        if not args.map:
            raise ValueError("--map is required with --trajectory")
        trajs = [read_trajectory_csv(p, args.origin) for p in args.trajectory]
        svg = render_trajectory_svg(load_map(args.map), trajs, args.origin)
    Path(args.out).write_text(svg)
    return 0


COMMANDS = {"train": _train, "eval": _eval, "score": _score, "plot": _plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError, FloatingPointError) as exc:
        print(f"agvrl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line entry points.

Subcommands: verify-geometry, counterexample, contours, train, eval.
Every run is a pure function of (config file, flags, seed); exit codes are
0 on success, 1 when a verification or acceptance condition fails, and 2
for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .env import DroneState, EpisodeConfig, TrackingEnv
from .evaluate import (
    EvalProtocol,
    ablation_report,
    pose_projection,
    run_protocol,
    verify_geometry,
    verify_proposition,
    write_ablation_csv,
)
from .reward import contour_grid
from .training import curriculum_train, load_checkpoint, save_checkpoint, write_training_log

_REWARD_NAMES = {"goal-centered": "goal_centered", "distance": "distance"}


def _make_env_factory(cfg: RunConfig):
    def factory(phase: int, seed: int) -> TrackingEnv:
        return TrackingEnv(
            cfg.camera,
            cfg.reward,
            replace(cfg.episode, phase=phase),
            seed=int(seed),
            obs_mode=cfg.obs_mode,
        )

    return factory


def cmd_verify_geometry(cfg: RunConfig, args) -> int:
    n = cfg["verify"]["poses"]
    tol = cfg["verify"]["tolerance"]
    checks, all_ok = verify_geometry(cfg.camera, n, tol, cfg.seed)
    good = sum(c.ok for c in checks)
    print(f"{good}/{n} poses within {tol:g}")
    if not all_ok:
        worst = max(checks, key=lambda c: c.max_error)
        print(f"worst pose {worst.pose_id}: error {worst.max_error:g}", file=sys.stderr)
        return 1
    return 0


def _read_pose_file(path) -> list[DroneState]:
    poses = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            poses.append(
                DroneState(
                    np.array([0.0, 0.0, float(row["altitude"])]),
                    float(row.get("yaw", 0.0) or 0.0),
                    float(row["pitch"]),
                )
            )
    return poses


def cmd_counterexample(cfg: RunConfig, args) -> int:
    poses = _read_pose_file(args.poses_file) if args.poses_file else None
    n = len(poses) if poses is not None else cfg["verify"]["counterexample_poses"]
    report = verify_proposition(
        cfg.camera, n, cfg["verify"]["samples_per_pose"], cfg.seed, poses=poses
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "counterexample.csv"
    report.write_csv(path)
    found = sum(r.found for r in report.rows)
    print(f"{found}/{n} poses yielded a deviation/distance counterexample -> {path}")
    return 0 if report.all_found else 1


def cmd_contours(cfg: RunConfig, args) -> int:
    which = _REWARD_NAMES.get(args.which, args.which)
    pitch = args.pitch if args.pitch is not None else cfg["contours"]["pitch"]
    altitude = args.altitude if args.altitude is not None else cfg["contours"]["altitude"]
    yaw = args.yaw if args.yaw is not None else cfg["contours"]["yaw"]
    res = args.resolution if args.resolution is not None else cfg["contours"]["resolution"]
    if res < 2:
        print("contours resolution must be at least 2", file=sys.stderr)
        return 2
    drone = DroneState(np.array([0.0, 0.0, altitude]), yaw, pitch)
    proj = pose_projection(cfg.camera, drone)
    grid = contour_grid(proj, which, (res, res), cfg.reward)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"contours_{which}.csv"
    grid.write_csv(path)
    finite = grid.values[~np.isnan(grid.values)]
    print(f"{which} grid {res}x{res} -> {path} (in-quad range [{finite.min():.6f}, {finite.max():.6f}])")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    reward_kind = _REWARD_NAMES[args.reward]
    use_curriculum = not args.no_curriculum
    params, log = curriculum_train(
        _make_env_factory(cfg),
        cfg.ppo,
        cfg.curriculum,
        cfg.seed,
        reward_kind=reward_kind,
        use_curriculum=use_curriculum,
        alpha=cfg.reward.alpha,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = args.reward + ("" if use_curriculum else "-nocur")
    ckpt = out / f"policy_{tag}.ckpt"
    save_checkpoint(
        ckpt,
        params,
        meta={
            "reward": reward_kind,
            "curriculum": use_curriculum,
            "seed": cfg.seed,
            "total_steps": cfg.curriculum.total_steps,
        },
    )
    log_path = out / f"train_log_{tag}.csv"
    write_training_log(log_path, log)
    switch = next((r[0] for r in log if r[1] == 2), None)
    last = log[-1] if log else (0,) * 8
    print(
        f"trained {last[0]} steps (phase switch at {switch}), "
        f"windowed reward {last[2]:.3f}, in-view rate {last[3]:.3f}"
    )
    print(f"checkpoint -> {ckpt}\ntraining log -> {log_path}")
    return 0


def _eval_one(cfg: RunConfig, ckpt_path) -> tuple:
    params, meta = load_checkpoint(ckpt_path)
    protocol = cfg.protocol
    env_cfg = replace(cfg.episode, max_steps=min(cfg.episode.max_steps, protocol.e_ml))
    result = run_protocol(
        params,
        lambda: TrackingEnv(cfg.camera, cfg.reward, env_cfg, seed=0, obs_mode=cfg.obs_mode),
        protocol,
        seed=cfg.seed,
    )
    return result, meta


def cmd_eval(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = args.compare if args.compare else [args.checkpoint]
    for p in paths:
        if not Path(p).is_file():
            print(f"checkpoint not found: {p}", file=sys.stderr)
            return 2
    results = {}
    for p in paths:
        result, _ = _eval_one(cfg, p)
        name = Path(p).stem
        results[name] = result
        csv_path = out / f"eval_{name}.csv"
        result.write_csv(csv_path)
        print(
            f"{name}: CR {result.cr_mean:.2f}±{result.cr_std:.2f}, "
            f"TSR {result.tsr_mean:.3f}±{result.tsr_std:.3f} "
            f"({result.episode_count} episodes) -> {csv_path}"
        )
    if args.compare:
        print()
        print(ablation_report(results))
        write_ablation_csv(out / "ablation.csv", results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gctrack", description=__doc__)
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="root seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--workers", type=int, default=None, help="worker env count override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-geometry", help="frustum projection vs world-frame ray solver")
    p.set_defaults(func=cmd_verify_geometry)

    p = sub.add_parser("counterexample", help="deviation vs distance ordering counterexamples")
    p.add_argument("--poses-file", default=None, help="CSV of poses (pitch,altitude[,yaw])")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("contours", help="reward field grid over the projected quad")
    p.add_argument("--which", required=True, choices=["deviation", "goal-centered", "distance"])
    p.add_argument("--pitch", type=float, default=None)
    p.add_argument("--altitude", type=float, default=None)
    p.add_argument("--yaw", type=float, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(func=cmd_contours)

    p = sub.add_parser("train", help="curriculum PPO training")
    p.add_argument("--reward", choices=list(_REWARD_NAMES), default="goal-centered")
    p.add_argument("--no-curriculum", action="store_true", help="start directly in phase 2")
    p.add_argument("--total-steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the four-angle evaluation protocol")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--compare", nargs=2, metavar=("A", "B"), default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out"] = args.out
    if args.workers is not None:
        overrides["ppo.workers"] = args.workers
    if getattr(args, "total_steps", None) is not None:
        overrides["curriculum.total_steps"] = args.total_steps
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "eval" and not (args.checkpoint or args.compare):
        print("eval requires --checkpoint or --compare", file=sys.stderr)
        return 2
    return args.func(cfg, args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: gen-envs, train, evaluate, plan-once, replay.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Every run
directory receives the echoed effective config and the master seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="paramnav",
                     description="parameter-policy navigation toolkit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-envs", parents=[], help="generate an environment suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("train", help="train a parameter policy")
    p.add_argument("--suite", required=True, help="suite directory from gen-envs")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--mode", choices=["sync", "async"], default=None)
    p.add_argument("--resume", default=None, help="full checkpoint to resume")

    p = sub.add_parser("evaluate", help="compare a checkpoint against fixed params")
    p.add_argument("--suite", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-params", default=None,
                   help="key=value file; default: bound midpoints")
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    p = sub.add_parser("plan-once", help="one DWA decision, printed as JSON")
    p.add_argument("--grid", required=True)
    p.add_argument("--pose", required=True, help="x,y,heading")
    p.add_argument("--goal", required=True, help="x,y")
    p.add_argument("--params", default=None, help="key=value file")
    p.add_argument("--twist", default="0,0", help="current linear,angular")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-render a trajectory CSV onto its grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    return parser


def _load_config(path: str | None):
    from .config import Config

    return Config.load(path) if path else Config()


def _cmd_gen_envs(args) -> int:
    from .envgen import build_suite, save_suite, suite_hash

    cfg = _load_config(args.config)
    suite = build_suite(args.seed, n=args.n, config=cfg.ca_config(),
                        robot=cfg.robot_spec())
    os.makedirs(args.out, exist_ok=True)
    save_suite(suite, args.out)
    cfg.echo(os.path.join(args.out, "config.txt"))
    with open(os.path.join(args.out, "seed.txt"), "w") as f:
        f.write(f"{args.seed}\n")
    print(f"wrote {len(suite.train_indices)} train + "
          f"{len(suite.test_indices)} test envs to {args.out} "
          f"(hash {suite_hash(suite)[:12]})")
    return 0


def _cmd_train(args) -> int:
    from .envgen import load_suite
    from .trainer import TrainRun

    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.set("train.master_seed", args.seed)
    if args.steps is not None:
        cfg.set("train.total_env_steps", args.steps)
    if args.workers is not None:
        cfg.set("train.workers", args.workers)
    if args.mode is not None:
        cfg.set("train.mode", args.mode)
    suite = load_suite(args.suite)
    os.makedirs(args.out, exist_ok=True)
    cfg.echo(os.path.join(args.out, "config.txt"))
    with open(os.path.join(args.out, "seed.txt"), "w") as f:
        f.write(f"{cfg['train.master_seed']}\n")
    run = TrainRun(suite.train_envs(), cfg.train_config(), cfg.td3_config(),
                   robot=cfg.robot_spec(), reward=cfg.reward_config(),
                   nav=cfg.nav_config(), bounds=cfg.bounds(),
                   run_dir=args.out)
    try:
        if args.resume:
            result = run.resume(args.resume)
        else:
            result = run.run()
    except KeyboardInterrupt:
        path = os.path.join(args.out, "checkpoint_interrupt.npz")
        run.agent.save_checkpoint(path, extra=run._final_extra())
        print(f"interrupted: checkpoint written to {path}", file=sys.stderr)
        return 2
    print(f"trained {result.env_steps} env steps, {result.updates} updates, "
          f"{result.episodes} episodes in {result.wall_time_s:.1f}s; "
          f"final checkpoint {result.final_checkpoint_path}")
    return 0


def _load_policy(checkpoint: str, cfg):
    from .metaenv import STATE_DIM
    from .td3 import Td3Agent

    agent = Td3Agent(STATE_DIM, 8, cfg.td3_config(), seed=0)
    agent.load_checkpoint(checkpoint)
    net = agent.actor

    def policy(state):
        return net.forward(state[None, :])[0]

    return policy


def _cmd_evaluate(args) -> int:
    from .config import parse_params_file
    from .envgen import load_suite
    from .evalbench import evaluate_suite
    from .metaenv import constant_policy

    cfg = _load_config(args.config)
    suite = load_suite(args.suite)
    bounds = cfg.bounds()
    baseline = (parse_params_file(args.baseline_params)
                if args.baseline_params else bounds.midpoint_params())
    learned_policy = _load_policy(args.checkpoint, cfg)
    fixed_policy = constant_policy(baseline, bounds)
    indices = {"train": suite.train_indices, "test": suite.test_indices,
               "all": suite.train_indices + suite.test_indices}[args.split]
    envs = {i: suite.envs[i] for i in indices}
    split_map = {i: ("train" if i in set(suite.train_indices) else "test")
                 for i in indices}
    os.makedirs(args.out, exist_ok=True)
    cfg.echo(os.path.join(args.out, "config.txt"))
    report = evaluate_suite(
        envs, split_map, learned_policy, fixed_policy, args.out,
        n_trials=args.trials if args.trials is not None else cfg["eval.trials"],
        seed=args.seed,
        jitter=args.jitter if args.jitter is not None else cfg["eval.jitter"],
        alpha=args.alpha if args.alpha is not None else cfg["eval.alpha"],
        robot=cfg.robot_spec(), reward=cfg.reward_config(),
        nav=cfg.nav_config(), bounds=bounds)
    agg = report.aggregate["all"]
    sig = report.significance["all"]
    print(f"evaluated {agg['n']} envs: learned {agg['mean_learned']:.2f}s "
          f"vs fixed {agg['mean_fixed']:.2f}s "
          f"({agg['improvement_pct']:.1f}% improvement); "
          f"significant: learned {sig['learned_better']}, "
          f"fixed {sig['fixed_better']} (alpha {report.alpha})")
    return 0


def _cmd_plan_once(args) -> int:
    from .config import parse_params_file
    from .planner import PlannerContext, dwa_plan, build_local_costmap
    from .world import OccupancyGrid, Pose2D, Twist

    cfg = _load_config(args.config)
    grid = OccupancyGrid.load(args.grid)
    x, y, heading = (float(v) for v in args.pose.split(","))
    gx, gy = (float(v) for v in args.goal.split(","))
    lin, ang = (float(v) for v in args.twist.split(","))
    params = (parse_params_file(args.params) if args.params
              else cfg.bounds().midpoint_params())
    nav = cfg.nav_config()
    ctx = PlannerContext(grid=grid, goal=(gx, gy), spec=cfg.robot_spec(),
                         horizon=nav.rollout_horizon, sim_dt=nav.physics_dt,
                         lookahead=nav.lookahead,
                         goal_lookahead=nav.goal_lookahead,
                         costmap_side=nav.costmap_side)
    pose = Pose2D(x, y, heading)
    ctx.replan(pose)
    costmap = build_local_costmap(grid, pose, params, ctx.spec,
                                  nav.costmap_side)
    dec = dwa_plan(costmap, pose, Twist(lin, ang), ctx.path, params, ctx.spec,
                   nav.rollout_horizon, nav.physics_dt, nav.goal_lookahead)
    print(json.dumps({
        "linear": dec.twist.linear, "angular": dec.twist.angular,
        "feasible": dec.feasible, "candidate_count": dec.candidate_count,
        "best_cost": dec.best_cost if math.isfinite(dec.best_cost) else None,
    }))
    return 0


def _cmd_replay(args) -> int:
    from .metaenv import read_trajectory_csv
    from .world import OccupancyGrid

    grid = OccupancyGrid.load(args.grid)
    rows = read_trajectory_csv(args.trajectory)
    canvas = [["#" if grid.cells[r, c] else "."
               for c in range(grid.width)] for r in range(grid.height)]
    for row in rows:
        r, c = grid.world_to_cell(row[2], row[3])
        if 0 <= r < grid.height and 0 <= c < grid.width:
            canvas[r][c] = "*"
    if rows:
        r0, c0 = grid.world_to_cell(rows[0][2], rows[0][3])
        r1, c1 = grid.world_to_cell(rows[-1][2], rows[-1][3])
        canvas[r0][c0] = "S"
        canvas[r1][c1] = "E"
    total_time = rows[-1][1] if rows else 0.0
    done = bool(rows and rows[-1][-1])
    with open(args.out, "w") as f:
        f.write(f"# decisions={len(rows)} sim_time_s={total_time!r} "
                f"terminated={done}\n")
        for line in reversed(canvas):  # top of the world first
            f.write("".join(line) + "\n")
    print(f"wrote annotated path map to {args.out}")
    return 0


_COMMANDS = {
    "gen-envs": _cmd_gen_envs,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "plan-once": _cmd_plan_once,
    "replay": _cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

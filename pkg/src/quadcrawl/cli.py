"""Command-line driver: ``python -m quadcrawl {plan,gen,train,rollout,eval}``.

Exit codes: 0 success, 1 domain failure (solver did not converge, rollout
timed out or faulted), 2 usage error (bad flags, unreadable or malformed
inputs). Every output file carries a ``config_hash`` computed from the
arguments that determine its contents.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import TorsoPose
from .datagen import GenerationError, SamplingError, generate_dataset, read_dataset, sample_initial_poses, write_dataset
from .planner import CollisionError, PlannerConfig, plan, plan_2d, write_trajectory
from .policy import PAPER_HIDDEN, TrainConfig, TrainingDiverged, load_model, model_to_dict, train, write_history
from .scenario import Scenario, ScenarioError, load_scenario, paper_scenario

log = logging.getLogger("quadcrawl")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

PRESETS = {
    "desk": TrainConfig(hidden=(64, 128, 128, 64), batch_size=64, epochs=20, learning_rate=0.2),
    "paper": TrainConfig(hidden=PAPER_HIDDEN, batch_size=1024, epochs=20, learning_rate=0.5),
}


class UsageError(Exception):
    pass


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _scenario(arg) -> Scenario:
    if arg in (None, "paper"):
        return paper_scenario()
    return load_scenario(arg)


def _pose(text: str) -> TorsoPose:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"pose must be comma-separated numbers, got {text!r}") from exc
    if len(values) not in (3, 4):
        raise UsageError(f"pose needs x,y,z[,yaw], got {text!r}")
    return TorsoPose(*values)


def _planner_config(scenario: Scenario) -> PlannerConfig:
    return PlannerConfig(knot_count=scenario.knot_count)


def _write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- plan -------------------------------------------------------------------
def cmd_plan(args) -> int:
    scenario = _scenario(args.scenario)
    start = _pose(args.start) if args.start else scenario.start
    cfg = _planner_config(scenario)
    chash = config_hash({"cmd": "plan", "scenario": scenario.digest(), "start": start.as_array().tolist(), "mode": args.mode})
    solver = plan_2d if args.mode == "2d" else plan
    report = solver(start, scenario.goal, scenario.world, cfg)
    traj = report.trajectory
    write_trajectory(traj, args.output, f"config_hash={chash}")
    summary = {
        "config_hash": chash,
        "mode": args.mode,
        "status": report.solver_status,
        "total_time": traj.total_time,
        "knots": traj.knot_count + 1,
        "min_clearance": report.min_clearance,
        "max_dynamics_defect": report.max_dynamics_defect,
        "kkt_residual": report.kkt_residual,
        "constraint_violation": report.constraint_violation,
        "iterations": report.iterations,
        "min_z": float(traj.states[:, 2].min()),
        "max_abs_y": float(np.abs(traj.states[:, 1]).max()),
    }
    _write_json(summary, args.report or f"{args.output}.report.json")
    print(f"status={report.solver_status} T={traj.total_time:.4f} min_clearance={report.min_clearance:.4f}")
    return EXIT_OK if report.converged else EXIT_DOMAIN


# -- gen --------------------------------------------------------------------
def cmd_gen(args) -> int:
    if args.count < 0 or args.points < 2 or args.workers < 1:
        raise UsageError("need count >= 0, points >= 2, workers >= 1")
    scenario = _scenario(args.scenario)
    cfg = _planner_config(scenario)
    chash = config_hash(
        {"cmd": "gen", "scenario": scenario.digest(), "count": args.count, "points": args.points, "seed": args.seed}
    )
    dataset, summary = generate_dataset(
        scenario.world,
        scenario.goal,
        scenario.distribution,
        args.count,
        args.points,
        cfg,
        seed=args.seed,
        parallelism=args.workers,
        scenario_hash=scenario.digest(),
    )
    write_dataset(dataset, args.output, f"config_hash={chash}")
    data = summary.to_dict()
    data["config_hash"] = chash
    data["samples"] = len(dataset)
    _write_json(data, args.summary or f"{args.output}.summary.json")
    print(f"trajectories={summary.succeeded}/{summary.requested} samples={len(dataset)} mean_T={summary.mean_total_time:.4f}")
    return EXIT_OK


# -- train ------------------------------------------------------------------
def _train_config(args) -> TrainConfig:
    base = PRESETS[args.preset].to_dict()
    if args.config:
        try:
            base.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read training config {args.config}: {exc}") from exc
    for key, value in (
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("learning_rate", args.lr),
        ("lr_decay", args.lr_decay),
        ("seed", args.seed),
    ):
        if value is not None:
            base[key] = value
    if args.hidden:
        base["hidden"] = [int(v) for v in args.hidden.split(",")]
    try:
        return TrainConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from exc


def cmd_train(args) -> int:
    if not Path(args.dataset).is_file():
        raise UsageError(f"dataset {args.dataset} not found")
    config = _train_config(args)
    dataset = read_dataset(args.dataset)
    chash = config_hash({"cmd": "train", "dataset": file_digest(args.dataset), "config": config.to_dict()})
    result = train(dataset, config)
    data = model_to_dict(result.model)
    data["config_hash"] = chash
    Path(args.output).write_text(json.dumps(data) + "\n")
    write_history(result.history, args.history or f"{args.output}.history.csv", f"config_hash={chash}")
    best = result.history[result.best_epoch]
    print(f"best_epoch={result.best_epoch} val_mse={best[2]:.3e} test_mse={result.test_mse:.3e} config_hash={chash}")
    return EXIT_OK


# -- rollout ----------------------------------------------------------------
def _policy(args):
    if getattr(args, "oracle", None):
        from .sim import NearestSamplePolicy

        return NearestSamplePolicy(read_dataset(args.oracle)), file_digest(args.oracle)
    if not args.model:
        raise UsageError("either --model or --oracle is required")
    if not Path(args.model).is_file():
        raise UsageError(f"model {args.model} not found")
    return load_model(args.model), file_digest(args.model)


def cmd_rollout(args) -> int:
    from .sim import REACHED, RolloutConfig, check_trace, rollout, write_trace

    scenario = _scenario(args.scenario)
    policy, digest = _policy(args)
    start = _pose(args.start) if args.start else scenario.start
    chash = config_hash(
        {"cmd": "rollout", "scenario": scenario.digest(), "policy": digest, "start": start.as_array().tolist(), "seed": args.seed, "max_time": args.max_time}
    )
    result = rollout(policy, scenario.world, start, scenario.goal, config=RolloutConfig(max_time=args.max_time))
    if args.output:
        write_trace(result, args.output, f"config_hash={chash}")
    check = check_trace(result)
    print(
        f"outcome={result.outcome} ticks={result.ticks} time={result.ticks * 0.01:.2f} "
        f"min_clearance={result.min_clearance:.4f} pyramid_violations={check['pyramid_violations']} "
        f"torque_violations={check['torque_violations']} stance_drift={check['stance_drift']:.3g} config_hash={chash}"
    )
    if result.message:
        print(result.message, file=sys.stderr)
    return EXIT_OK if result.outcome == REACHED else EXIT_DOMAIN


# -- eval -------------------------------------------------------------------
def cmd_eval(args) -> int:
    from .sim import REACHED, RolloutConfig, rollout

    if args.trials < 0:
        raise UsageError("trials must be >= 0")
    scenario = _scenario(args.scenario)
    policy, digest = _policy(args)
    chash = config_hash({"cmd": "eval", "scenario": scenario.digest(), "policy": digest, "trials": args.trials, "seed": args.seed})
    summary = {"config_hash": chash, "trials": args.trials}
    if args.trials:
        starts = sample_initial_poses(scenario.distribution, args.trials, scenario.world, args.seed)
        outcomes, times, clearances = [], [], []
        for pose in starts:
            r = rollout(policy, scenario.world, pose, scenario.goal, config=RolloutConfig(max_time=args.max_time))
            outcomes.append(r.outcome)
            clearances.append(r.min_clearance)
            if r.outcome == REACHED:
                times.append(r.time_to_goal)
        summary.update(
            success_rate=sum(o == REACHED for o in outcomes) / args.trials,
            mean_time_to_goal=float(np.mean(times)) if times else None,
            min_clearance=float(np.nanmin(clearances)),
            outcomes=outcomes,
        )
    if not args.skip_compare:
        cfg = _planner_config(scenario)
        r3 = plan(scenario.start, scenario.goal, scenario.world, cfg)
        r2 = plan_2d(scenario.start, scenario.goal, scenario.world, cfg)
        summary["planner"] = {
            "T_3d": r3.trajectory.total_time,
            "T_2d": r2.trajectory.total_time,
            "status_3d": r3.solver_status,
            "status_2d": r2.solver_status,
            "3d_faster": r3.trajectory.total_time < r2.trajectory.total_time,
        }
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadcrawl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    scenario_help = "scenario JSON (relative paths also searched in $QUADCRAWL_SCENARIO_DIR); default: built-in table scene"

    p = sub.add_parser("plan", help="solve one minimum-time plan")
    p.add_argument("--scenario", help=scenario_help)
    p.add_argument("--start", help="override start pose x,y,z[,yaw]")
    p.add_argument("--mode", choices=("3d", "2d"), default="3d")
    p.add_argument("--output", required=True, help="trajectory CSV")
    p.add_argument("--report", help="report JSON (default: OUTPUT.report.json)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gen", help="generate a pose -> velocity dataset")
    p.add_argument("--scenario", help=scenario_help)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", required=True)
    p.add_argument("--summary", help="summary JSON (default: OUTPUT.summary.json)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit the velocity policy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--hidden", help="comma-separated hidden widths")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True, help="model JSON")
    p.add_argument("--history", help="history CSV (default: OUTPUT.history.csv)")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("rollout", cmd_rollout, "closed-loop simulation"), ("eval", cmd_eval, "batch evaluation")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", help=scenario_help)
        p.add_argument("--model", help="trained model JSON")
        p.add_argument("--oracle", help="dataset file; use its nearest sample as the policy")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-time", type=float, default=60.0)
        p.add_argument("--output")
        if name == "rollout":
            p.add_argument("--start", help="override start pose x,y,z[,yaw]")
        else:
            p.add_argument("--trials", type=int, default=20)
            p.add_argument("--skip-compare", action="store_true", help="skip the 2D vs 3D planner comparison")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CollisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (GenerationError, SamplingError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

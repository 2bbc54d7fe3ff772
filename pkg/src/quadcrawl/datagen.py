"""Self-labelled dataset generation: sample start poses, plan, resample.

Dataset file layout (one sample per line after a header)::

    traj_id,knot,t,x,y,z,yaw,vx,vy,vz,vyaw

Floats are written with ``repr`` so that reading them back is exact.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import TorsoPose, TorsoTrajectory, VelocitySample, World, normalize_yaw
from .distance import signed_distance_many
from .planner import PlannerConfig, PlanReport, audit_trajectory, plan
from .scenario import InitialPoseDistribution

log = logging.getLogger(__name__)

DATASET_HEADER = "traj_id,knot,t,x,y,z,yaw,vx,vy,vz,vyaw"
MAX_ATTEMPTS_PER_POSE = 100


class SamplingError(RuntimeError):
    pass


class GenerationError(RuntimeError):
    pass


def sample_initial_poses(dist: InitialPoseDistribution, count: int, world: World, seed: int) -> list[TorsoPose]:
    """Draw ``count`` valid start poses by rejection sampling.

    Each draw is clamped into the workspace box and rejected when it violates
    the clearance; a pose that needs more than 100 attempts raises
    :class:`SamplingError`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    mean = np.asarray(dist.mean)
    std = np.asarray(dist.stddev)
    lo, hi = world.state_lower, world.state_upper
    poses = []
    for _ in range(count):
        for _attempt in range(MAX_ATTEMPTS_PER_POSE):
            x, y, yaw = mean + std * rng.standard_normal(3)
            x = float(np.clip(x, lo[0], hi[0]))
            y = float(np.clip(y, lo[1], hi[1]))
            if signed_distance_many([[x, y, dist.fixed_z]], world)[0] >= world.clearance:
                poses.append(TorsoPose(x, y, dist.fixed_z, normalize_yaw(yaw)))
                break
        else:
            raise SamplingError(
                f"rejected {MAX_ATTEMPTS_PER_POSE} consecutive draws; the start distribution "
                f"(mean {tuple(mean)}, fixed z {dist.fixed_z}) is inconsistent with the world"
            )
    return poses


def resample_trajectory(traj: TorsoTrajectory, points: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """``points`` (pose, velocity) pairs uniformly spaced in time.

    States are interpolated linearly between knots; the first and last pair
    are the trajectory endpoints.
    """
    if points < 2:
        raise ValueError("points must be >= 2")
    X = traj.states
    if traj.total_time <= 0:
        return [(X[0, :4].copy(), X[0, 4:].copy()) for _ in range(points)]
    knots = traj.times
    t = np.linspace(0.0, traj.total_time, points)
    out = np.empty((points, 8))
    for j in range(8):
        out[:, j] = np.interp(t, knots, X[:, j])
    out[0], out[-1] = X[0], X[-1]
    return [(row[:4].copy(), row[4:].copy()) for row in out]


@dataclass
class Dataset:
    """Pose -> velocity samples with per-sample provenance.

    ``traj_ids`` are dense (0..S-1 over successful plans) and ``knots`` index
    the resampled point within its trajectory.
    """

    inputs: np.ndarray
    targets: np.ndarray
    traj_ids: np.ndarray
    knots: np.ndarray
    times: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 4)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 4)
        self.traj_ids = np.asarray(self.traj_ids, dtype=int).reshape(-1)
        self.knots = np.asarray(self.knots, dtype=int).reshape(-1)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        n = self.inputs.shape[0]
        if not all(a.shape[0] == n for a in (self.targets, self.traj_ids, self.knots, self.times)):
            raise ValueError("dataset columns have different lengths")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def trajectory_count(self) -> int:
        return int(np.unique(self.traj_ids).size)

    @property
    def samples(self) -> list[VelocitySample]:
        return [VelocitySample(p, v) for p, v in zip(self.inputs, self.targets)]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            self.inputs[mask], self.targets[mask], self.traj_ids[mask], self.knots[mask], self.times[mask], dict(self.metadata)
        )

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.zeros((0, 4)), np.zeros((0, 4)), np.zeros(0), np.zeros(0), np.zeros(0))


@dataclass
class GenerationSummary:
    requested: int
    succeeded: int
    mean_total_time: float
    mean_min_clearance: float
    seed: int
    scenario_hash: str
    points_per_trajectory: int
    trajectories: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _plan_one(args):
    start, goal, world, config = args
    try:
        return plan(start, goal, world, config)
    except Exception as exc:  # noqa: BLE001 - one bad start must not kill the batch
        log.warning("plan from %s failed: %s", start, exc)
        return None


def generate_dataset(
    world: World,
    goal: TorsoPose,
    dist: InitialPoseDistribution,
    trajectory_count: int,
    points_per_traj: int,
    config: PlannerConfig | None = None,
    seed: int = 0,
    parallelism: int = 1,
    scenario_hash: str = "",
    min_success_rate: float = 0.5,
    return_reports: bool = False,
):
    """Plan from ``trajectory_count`` sampled starts and resample each plan.

    Start poses are drawn sequentially from ``seed`` before any solve, plans
    run on ``parallelism`` worker processes, and results are assembled in
    start order, so the output does not depend on the worker count. Plans
    that fail to converge are skipped.

    Returns ``(dataset, summary)``, plus the per-start list of
    :class:`PlanReport` (``None`` for crashed solves) when
    ``return_reports`` is set.
    """
    config = config or PlannerConfig()
    if trajectory_count == 0:
        summary = GenerationSummary(0, 0, 0.0, 0.0, seed, scenario_hash, points_per_traj)
        ds = Dataset.empty()
        ds.metadata = {"seed": seed, "scenario_hash": scenario_hash}
        return (ds, summary, []) if return_reports else (ds, summary)
    starts = sample_initial_poses(dist, trajectory_count, world, seed)
    jobs = [(s, goal, world, config) for s in starts]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(pool.map(_plan_one, jobs))
    else:
        reports = [_plan_one(j) for j in jobs]

    inputs, targets, ids, knots, times = [], [], [], [], []
    records = []
    total_times, clearances = [], []
    dense = 0
    for index, (start, report) in enumerate(zip(starts, reports)):
        if report is None or not report.converged:
            status = "crashed" if report is None else report.solver_status
            log.info("start %d skipped: %s", index, status)
            records.append({"pose_index": index, "start": start.as_array().tolist(), "status": status})
            continue
        traj = report.trajectory
        pairs = resample_trajectory(traj, points_per_traj)
        t = np.linspace(0.0, traj.total_time, points_per_traj)
        for k, (pose, vel) in enumerate(pairs):
            inputs.append(pose)
            targets.append(vel)
            ids.append(dense)
            knots.append(k)
            times.append(t[k])
        total_times.append(traj.total_time)
        clearances.append(audit_trajectory(traj, world)["min_clearance"])
        records.append(
            {
                "pose_index": index,
                "traj_id": dense,
                "start": start.as_array().tolist(),
                "status": report.solver_status,
                "total_time": traj.total_time,
            }
        )
        dense += 1

    if dense < min_success_rate * trajectory_count:
        raise GenerationError(
            f"only {dense}/{trajectory_count} plans converged; statuses: "
            + ", ".join(sorted({r['status'] for r in records if 'traj_id' not in r}))
        )
    summary = GenerationSummary(
        requested=trajectory_count,
        succeeded=dense,
        mean_total_time=float(np.mean(total_times)) if total_times else 0.0,
        mean_min_clearance=float(np.mean(clearances)) if clearances else 0.0,
        seed=seed,
        scenario_hash=scenario_hash,
        points_per_trajectory=points_per_traj,
        trajectories=records,
    )
    ds = Dataset(
        np.array(inputs).reshape(-1, 4),
        np.array(targets).reshape(-1, 4),
        ids,
        knots,
        times,
        metadata={"seed": seed, "scenario_hash": scenario_hash},
    )
    return (ds, summary, reports) if return_reports else (ds, summary)


def write_dataset(dataset: Dataset, path, comment: str | None = None) -> None:
    """Header line (after an optional ``#`` comment), then one sample per line."""
    lines = [f"# {comment}"] if comment else []
    lines.append(DATASET_HEADER)
    for i in range(len(dataset)):
        values = [dataset.times[i], *dataset.inputs[i], *dataset.targets[i]]
        lines.append(f"{dataset.traj_ids[i]},{dataset.knots[i]}," + ",".join(repr(float(v)) for v in values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    text = Path(path).read_text().splitlines()
    text = [line for line in text if not line.startswith("#")]
    if not text or text[0].strip() != DATASET_HEADER:
        raise ValueError(f"{path}: missing dataset header {DATASET_HEADER!r}")
    rows = [line.split(",") for line in text[1:] if line.strip()]
    if not rows:
        return Dataset.empty()
    for n, row in enumerate(rows, start=2):
        if len(row) != 11:
            raise ValueError(f"{path}:{n}: expected 11 columns, got {len(row)}")
    ids = np.array([int(r[0]) for r in rows])
    knots = np.array([int(r[1]) for r in rows])
    values = np.array([[float(v) for v in r[2:]] for r in rows])
    return Dataset(values[:, 1:5], values[:, 5:9], ids, knots, values[:, 0])


def write_summary(summary: GenerationSummary, path) -> None:
    Path(path).write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")

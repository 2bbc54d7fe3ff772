"""Scenario files: obstacles, bounds, clearance, start/goal and planner size.

A scenario is a JSON object::

    {
      "schema_version": 1,
      "length_unit": "m",              # or "cm"; lengths are converted once here
      "obstacles": [{"min": [x, y, z], "max": [x, y, z]}, ...],
      "state_lower": [8 numbers], "state_upper": [8 numbers],
      "command_lower": [4 numbers], "command_upper": [4 numbers],
      "clearance": 0.04,
      "max_planar_speed": 0.5,         # null disables the planar speed cap
      "start": {"x": 0, "y": 0, "z": 0.28, "yaw": 0},
      "goal":  {"x": 3, "y": 0, "z": 0.28, "yaw": 0},
      "knot_count": 100,
      "initial_distribution": {"mean": [x, y, yaw], "stddev": [x, y, yaw], "fixed_z": 0.28}
    }

Every key except ``schema_version`` is optional and falls back to the
defaults of :func:`paper_scenario`. With ``length_unit = "cm"`` every length
(obstacle corners, position/velocity/acceleration bounds on x, y, z,
clearance, speed cap, pose coordinates, sampling mean/stddev on x, y and
``fixed_z``) is divided by 100; angles stay in radians.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import NOMINAL_HEIGHT, BoxObstacle, TorsoPose, World

SCHEMA_VERSION = 1
SCENARIO_DIR_ENV = "QUADCRAWL_SCENARIO_DIR"

TABLE_TOP = 0.25
TABLE_THICKNESS = 0.02
TABLE_CENTER = (1.5, 0.0)
TABLE_SIZE = (0.4, 1.0)

_LINEAR_STATE = np.array([1, 1, 1, 0, 1, 1, 1, 0], dtype=bool)
_LINEAR_COMMAND = np.array([1, 1, 1, 0], dtype=bool)


class ScenarioError(ValueError):
    """Malformed scenario file; the message names the offending field."""


@dataclass(frozen=True)
class InitialPoseDistribution:
    """Gaussian over (x, y, yaw) with the torso height held fixed."""

    mean: tuple = (0.5, 0.066, 0.026)
    stddev: tuple = (0.5, 0.66, 0.02)
    fixed_z: float = NOMINAL_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "stddev", tuple(float(v) for v in self.stddev))
        if len(self.mean) != 3 or len(self.stddev) != 3:
            raise ValueError("mean and stddev need three components (x, y, yaw)")
        if min(self.stddev) < 0:
            raise ValueError("stddev must be non-negative")
        if not self.fixed_z > 0:
            raise ValueError("fixed_z must be positive")


@dataclass(frozen=True)
class Scenario:
    world: World
    start: TorsoPose
    goal: TorsoPose
    knot_count: int = 100
    distribution: InitialPoseDistribution = field(default_factory=InitialPoseDistribution)

    def to_dict(self) -> dict:
        w = self.world
        return {
            "schema_version": SCHEMA_VERSION,
            "length_unit": "m",
            "obstacles": [
                {"min": b.min_corner.tolist(), "max": b.max_corner.tolist()} for b in w.obstacles
            ],
            "state_lower": w.state_lower.tolist(),
            "state_upper": w.state_upper.tolist(),
            "command_lower": w.command_lower.tolist(),
            "command_upper": w.command_upper.tolist(),
            "clearance": w.clearance,
            "max_planar_speed": w.max_planar_speed,
            "start": _pose_dict(self.start),
            "goal": _pose_dict(self.goal),
            "knot_count": self.knot_count,
            "initial_distribution": {
                "mean": list(self.distribution.mean),
                "stddev": list(self.distribution.stddev),
                "fixed_z": self.distribution.fixed_z,
            },
        }

    def digest(self) -> str:
        """Short stable hash of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def table_obstacle() -> BoxObstacle:
    cx, cy = TABLE_CENTER
    dx, dy = TABLE_SIZE
    return BoxObstacle(
        [cx - dx / 2, cy - dy / 2, TABLE_TOP - TABLE_THICKNESS],
        [cx + dx / 2, cy + dy / 2, TABLE_TOP],
    )


def paper_scenario(**overrides) -> Scenario:
    """Table-crawl scene: start at the origin, goal at (3, 0), table slab at x = 1.5."""
    fields = dict(
        world=World(obstacles=(table_obstacle(),)),
        start=TorsoPose(0.0, 0.0, NOMINAL_HEIGHT, 0.0),
        goal=TorsoPose(3.0, 0.0, NOMINAL_HEIGHT, 0.0),
        knot_count=100,
        distribution=InitialPoseDistribution(),
    )
    fields.update(overrides)
    return Scenario(**fields)


def _pose_dict(p: TorsoPose) -> dict:
    return {"x": p.x, "y": p.y, "z": p.z, "yaw": p.yaw}


def _numbers(data, key, size, scale=None):
    value = data[key]
    try:
        arr = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"field '{key}' must be a list of numbers") from exc
    if arr.shape != (size,):
        raise ScenarioError(f"field '{key}' must have {size} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"field '{key}' has non-finite entries")
    if scale is not None:
        arr = arr * scale
    return arr


def _pose(data, key, unit) -> TorsoPose:
    value = data[key]
    if not isinstance(value, dict):
        raise ScenarioError(f"field '{key}' must be an object with x, y, z, yaw")
    try:
        return TorsoPose(
            float(value["x"]) * unit,
            float(value["y"]) * unit,
            float(value.get("z", NOMINAL_HEIGHT / unit)) * unit,
            float(value.get("yaw", 0.0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"field '{key}' is missing {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"field '{key}': {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    if "schema_version" not in data:
        raise ScenarioError("field 'schema_version' is required")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"field 'schema_version': unsupported version {data['schema_version']!r}")
    unit_name = data.get("length_unit", "m")
    if unit_name not in ("m", "cm"):
        raise ScenarioError(f"field 'length_unit' must be 'm' or 'cm', got {unit_name!r}")
    unit = 1.0 if unit_name == "m" else 0.01

    base = paper_scenario()
    w = base.world
    kwargs = {}
    if "obstacles" in data:
        boxes = []
        for i, item in enumerate(data["obstacles"]):
            try:
                boxes.append(BoxObstacle(np.array(item["min"], float) * unit, np.array(item["max"], float) * unit))
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"field 'obstacles[{i}]': {exc}") from exc
        kwargs["obstacles"] = tuple(boxes)
    else:
        kwargs["obstacles"] = w.obstacles
    for key, size, mask in (
        ("state_lower", 8, _LINEAR_STATE),
        ("state_upper", 8, _LINEAR_STATE),
        ("command_lower", 4, _LINEAR_COMMAND),
        ("command_upper", 4, _LINEAR_COMMAND),
    ):
        if key in data:
            kwargs[key] = _numbers(data, key, size, np.where(mask, unit, 1.0))
        else:
            kwargs[key] = getattr(w, key)
    try:
        kwargs["clearance"] = float(data.get("clearance", w.clearance / unit)) * unit
    except (TypeError, ValueError) as exc:
        raise ScenarioError("field 'clearance' must be a number") from exc
    speed = data.get("max_planar_speed", w.max_planar_speed / unit if w.max_planar_speed else None)
    kwargs["max_planar_speed"] = None if speed is None else float(speed) * unit
    try:
        world = World(**kwargs)
    except ValueError as exc:
        raise ScenarioError(f"invalid world: {exc}") from exc

    start = _pose(data, "start", unit) if "start" in data else base.start
    goal = _pose(data, "goal", unit) if "goal" in data else base.goal
    knots = data.get("knot_count", base.knot_count)
    if not isinstance(knots, int) or knots < 2:
        raise ScenarioError("field 'knot_count' must be an integer >= 2")
    dist = base.distribution
    if "initial_distribution" in data:
        d = data["initial_distribution"]
        try:
            scale = np.array([unit, unit, 1.0])
            dist = InitialPoseDistribution(
                mean=tuple(np.array(d["mean"], float) * scale),
                stddev=tuple(np.array(d["stddev"], float) * scale),
                fixed_z=float(d.get("fixed_z", NOMINAL_HEIGHT / unit)) * unit,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"field 'initial_distribution': {exc}") from exc
    return Scenario(world, start, goal, knots, dist)


def resolve_path(path) -> Path:
    """Look relative paths up in $QUADCRAWL_SCENARIO_DIR when not found locally."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(SCENARIO_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def load_scenario(path) -> Scenario:
    p = resolve_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {p} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def required_crawl_height(world: World | None = None) -> float:
    """Highest torso z that clears the table underside."""
    world = world or paper_scenario().world
    return TABLE_TOP - TABLE_THICKNESS - world.clearance

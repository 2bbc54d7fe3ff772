"""Collision-avoiding torso planning, learned velocity policy and MPC tracking for a quadruped."""

from .core import (
    BoxObstacle,
    GroundReactionForce,
    LegJointState,
    QuadrupedParams,
    TorsoCommand,
    TorsoPose,
    TorsoState,
    TorsoTrajectory,
    VelocitySample,
    World,
)
from .distance import signed_distance, smooth_signed_distance
from .nlp import NlpProblem, NlpSolution, SolverOptions, solve_nlp
from .planner import PlannerConfig, PlanReport, plan, plan_2d, transcribe
from .scenario import Scenario, load_scenario, paper_scenario

__version__ = "0.1.0"

__all__ = [
    "BoxObstacle",
    "GroundReactionForce",
    "LegJointState",
    "NlpProblem",
    "NlpSolution",
    "PlanReport",
    "PlannerConfig",
    "QuadrupedParams",
    "Scenario",
    "SolverOptions",
    "TorsoCommand",
    "TorsoPose",
    "TorsoState",
    "TorsoTrajectory",
    "VelocitySample",
    "World",
    "load_scenario",
    "paper_scenario",
    "plan",
    "plan_2d",
    "signed_distance",
    "smooth_signed_distance",
    "solve_nlp",
    "transcribe",
]

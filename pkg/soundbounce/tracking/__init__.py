from .base import build_controller, get_available_controllers, register_controller
from .controller import Controller, MotionCommand, RobotPlane
from .cup import CupConfig, drop_into_cup, run_cup_experiment
from .deterministic import DeterministicController, deterministic_controller_step
from .effector import EndEffector, trajectory_energy
from .harness import (
    BallSetup,
    TrialResult,
    run_batch,
    run_benchmark,
    run_trial,
    simulate_toss_to_plane,
    summarize_benchmark,
)
from .stochastic import StochasticController, step_fraction, stochastic_controller_step

__all__ = [
    "BallSetup",
    "Controller",
    "CupConfig",
    "DeterministicController",
    "EndEffector",
    "MotionCommand",
    "RobotPlane",
    "StochasticController",
    "TrialResult",
    "build_controller",
    "deterministic_controller_step",
    "drop_into_cup",
    "get_available_controllers",
    "register_controller",
    "run_batch",
    "run_benchmark",
    "run_cup_experiment",
    "run_trial",
    "simulate_toss_to_plane",
    "step_fraction",
    "stochastic_controller_step",
    "summarize_benchmark",
    "trajectory_energy",
]

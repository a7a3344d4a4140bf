"""User simulator: catalog/user world, step dynamics and logged episodes."""
from .logs import (
    EVAL,
    TRAIN,
    EpisodeLogs,
    GroundTruth,
    LoggedStep,
    UniformPolicy,
    generate_logs,
    read_logs,
    write_logs,
)
from .world import SimConfig, SimUser, SimWorld, StepOutcome, sample_survey_rating, simulate_step, spawn_world

__all__ = [
    "EVAL",
    "TRAIN",
    "EpisodeLogs",
    "GroundTruth",
    "LoggedStep",
    "SimConfig",
    "SimUser",
    "SimWorld",
    "StepOutcome",
    "UniformPolicy",
    "generate_logs",
    "read_logs",
    "sample_survey_rating",
    "simulate_step",
    "spawn_world",
    "write_logs",
]

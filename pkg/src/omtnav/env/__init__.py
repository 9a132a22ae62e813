from .gridworld import (
    ACTIONS,
    DONE,
    N_ACTIONS,
    Detection,
    EnvConfig,
    EnvState,
    EpisodeOver,
    GridWorld,
    Observation,
    Pose,
    Task,
    TaskError,
    compute_reward,
    detect_objects,
    is_visible,
    oracle_actions,
    shortest_path_steps,
)
from .layout import GenConfig, GenerationError, Layout, PlacedObject, generate_layout

__all__ = [
    "ACTIONS",
    "DONE",
    "N_ACTIONS",
    "Detection",
    "EnvConfig",
    "EnvState",
    "EpisodeOver",
    "GridWorld",
    "Observation",
    "Pose",
    "Task",
    "TaskError",
    "compute_reward",
    "detect_objects",
    "is_visible",
    "oracle_actions",
    "shortest_path_steps",
    "GenConfig",
    "GenerationError",
    "Layout",
    "PlacedObject",
    "generate_layout",
]

"""2D deformable-loop world: physics, failure injection, cameras, sensing."""

from .render import Camera, Observation, SensorSuite, default_cameras, render
from .world import (
    CONTROL_RATE,
    GRASP_NODE_LEFT,
    GRASP_NODE_RIGHT,
    HANG_TERMINAL,
    N_PHASES,
    PHASE_NAMES,
    PHYSICS_RATE,
    POLICY_RATE,
    RECORD_RATE,
    TAKEOFF_TERMINAL,
    TASK_HANG,
    TASK_TAKEOFF,
    FailureInjector,
    World,
    WorldConfig,
)

__all__ = [
    "World", "WorldConfig", "FailureInjector",
    "Camera", "Observation", "SensorSuite", "default_cameras", "render",
    "PHYSICS_RATE", "CONTROL_RATE", "POLICY_RATE", "RECORD_RATE",
    "PHASE_NAMES", "N_PHASES", "HANG_TERMINAL", "TAKEOFF_TERMINAL",
    "TASK_HANG", "TASK_TAKEOFF", "GRASP_NODE_LEFT", "GRASP_NODE_RIGHT",
]

"""Foot-mounted inertial tracking, voxel obstacle maps and indoor route guidance."""

from .ahrs import AhrsState, ImuSample, madgwick_update, mahony_update, quat_integrate_gyro
from .deadreckon import OnlineTracker, StepSegment, TrackerConfig, Trajectory, run_offline, run_online
from .errors import NoPathError, NoStanceError, NotFoundError, StaleFixError, ValidationError
from .fusion import FusionState, PoseFix, apply_fix, apply_motion
from .planner import Costmap, NavPlan, find_object, generate_instructions, plan_path, project_occupancy
from .voxelmap import ConvKernel, ObstacleBox, SparseVoxelGrid, connected_components, sparse_conv, voxelize

__all__ = [
    "AhrsState", "ImuSample", "madgwick_update", "mahony_update", "quat_integrate_gyro",
    "OnlineTracker", "StepSegment", "TrackerConfig", "Trajectory", "run_offline", "run_online",
    "NoPathError", "NoStanceError", "NotFoundError", "StaleFixError", "ValidationError",
    "FusionState", "PoseFix", "apply_fix", "apply_motion",
    "Costmap", "NavPlan", "find_object", "generate_instructions", "plan_path", "project_occupancy",
    "ConvKernel", "ObstacleBox", "SparseVoxelGrid", "connected_components", "sparse_conv", "voxelize",
]

"""
Dynamic Gaussian representation: surfels, time evaluation, cameras and encodings.
"""
from model.camera import (
    CameraIntrinsics,
    CameraPose,
    Frame,
    pixel_rays,
    plucker_rays,
    project_points,
    world_to_camera,
)
from model.encoding import encode_frame, patchify, timestamp_image
from model.gaussian import (
    Gaussian4D,
    GaussianScene,
    SceneTensors,
    SurfelSnapshot,
    SurfelSnapshots,
    evaluate_at_time,
    opacity_at,
    orientation_at,
    position_at,
    random_scene,
    temporal_sigma,
)
from model.rotation import axis_angle_to_quat, quat_multiply, quat_normalize, quat_rotate, quat_to_rotmat

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "Frame",
    "pixel_rays",
    "plucker_rays",
    "project_points",
    "world_to_camera",
    "encode_frame",
    "patchify",
    "timestamp_image",
    "Gaussian4D",
    "GaussianScene",
    "SceneTensors",
    "SurfelSnapshot",
    "SurfelSnapshots",
    "evaluate_at_time",
    "opacity_at",
    "orientation_at",
    "position_at",
    "random_scene",
    "temporal_sigma",
    "axis_angle_to_quat",
    "quat_multiply",
    "quat_normalize",
    "quat_rotate",
    "quat_to_rotmat",
]

"""Synthetic roadside lidar: scenes, ray casting and a scripted scenario catalog."""

from roadtrack.sim.render import GroundTruth, RenderedFrame, render_frame, render_scene, sensor_rotation
from roadtrack.sim.scenarios import noise_free, scenario_by_name, scripted_scenarios
from roadtrack.sim.scene import (
    Actor,
    LidarModel,
    Mount,
    Scene,
    Segment,
    Shake,
    StaticObject,
    Trajectory,
    VegetationBlob,
    apply_shake,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
)

__all__ = [
    "Actor",
    "GroundTruth",
    "LidarModel",
    "Mount",
    "RenderedFrame",
    "Scene",
    "Segment",
    "Shake",
    "StaticObject",
    "Trajectory",
    "VegetationBlob",
    "apply_shake",
    "load_scene",
    "noise_free",
    "render_frame",
    "render_scene",
    "save_scene",
    "scenario_by_name",
    "scene_from_dict",
    "scene_to_dict",
    "scripted_scenarios",
    "sensor_rotation",
]

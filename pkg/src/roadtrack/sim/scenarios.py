"""Scripted scenarios reproducing a roadside intersection site.

The site: sensor on a 5.9 m pole at the origin looking along +x. A two-way
road crosses the view along y between x = 10.5 and x = 20, and a feeder road
runs along x toward the sensor at y in [-4.5, 0]. Beyond the crossing road
there is a small parking lot on the left, a tree beside the feeder road and a
hedge running away from the sensor on the right. A light pole stands on the
near right.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from roadtrack.sim.render import sensor_rotation
from roadtrack.sim.scene import (
    Actor,
    LidarModel,
    Scene,
    Segment,
    Shake,
    StaticObject,
    Trajectory,
    VegetationBlob,
)

CAR_DIMS = (4.5, 1.8, 1.5)
PEDESTRIAN_DIMS = (0.6, 0.5, 1.75)
CYCLIST_DIMS = (1.8, 0.7, 1.7)

VEG_MARGIN = 0.35
TREE = VegetationBlob("tree", (25.0, -7.0, 3.0), (1.6, 1.6, 1.5), mean_free_path=0.35, crop_margin=VEG_MARGIN)
_HEDGE_AZ = math.radians(-30.0)
HEDGE = VegetationBlob(
    "hedge",
    (26.75 * math.cos(_HEDGE_AZ), 26.75 * math.sin(_HEDGE_AZ), 0.9),
    (2.75, 0.8, 0.9),
    mean_free_path=0.35,
    crop_margin=VEG_MARGIN,
    yaw=_HEDGE_AZ,
)
POLE = StaticObject("light_pole", (7.0, -7.5), 0.0, (0.3, 0.3, 7.5), crop_margin=0.5)


def _shadow(footprint, far=31.0):
    """Ground polygon hidden behind a footprint, as seen from the origin."""
    pts = [(float(x), float(y)) for x, y in footprint]
    az = [math.atan2(y, x) for x, y in pts]
    near = min(math.hypot(x, y) for x, y in pts)
    lo, hi = min(az), max(az)
    return tuple(
        (round(d * math.cos(a), 3), round(d * math.sin(a), 3)) for d, a in ((near, lo), (far, lo), (far, hi), (near, hi))
    )


def _circle(center, radius, n=16):
    return [(center[0] + radius * math.cos(2 * math.pi * k / n), center[1] + radius * math.sin(2 * math.pi * k / n)) for k in range(n)]


TREE_SHADOW = _shadow(_circle(TREE.center, TREE.radii[0]))
POLE_SHADOW = _shadow(POLE.crop_box().box.corners())


def site(**kwargs) -> Scene:
    base = dict(
        statics=(POLE,),
        vegetation=(TREE, HEDGE),
        occluded=(TREE_SHADOW, POLE_SHADOW),
    )
    base.update(kwargs)
    return Scene(**base)


def _visible_half_span(x: float, lidar: LidarModel, margin: float, height: float = CAR_DIMS[2]) -> float:
    """Largest |y| at which any ray meets the plane ``x`` below ``height``.

    The pitched mount widens the ground footprint beyond ``x * tan(fov/2)``,
    so the span is measured from the actual rays.
    """
    scene = Scene(lidar=lidar)
    dirs = lidar.directions() @ sensor_rotation(scene, 0.0).T
    ok = dirs[:, 0] > 1e-9
    t = x / dirs[ok, 0]
    z = scene.mount.height + t * dirs[ok, 2]
    seen = (z >= 0.0) & (z <= height) & (t <= lidar.max_range)
    return float(np.abs(t[seen] * dirs[ok, 1][seen]).max()) + margin


def crossing_pass(name: str, lane_x: float, direction: int, speed: float, seed: int = 0) -> Scene:
    """A car crossing the view along the road; ``direction`` +1 means +y."""
    lidar = LidarModel()
    # near face matters when the range limit binds, far face when the fov does
    half = max(_visible_half_span(lane_x + s * CAR_DIMS[1] / 2, lidar, CAR_DIMS[0] / 2 + 1.0) for s in (-1, 1))
    duration = 2 * half / speed
    heading = math.pi / 2 if direction > 0 else -math.pi / 2
    tr = Trajectory(0.0, lane_x, -direction * half, heading, speed, (Segment(duration),))
    return site(name=name, duration=duration, actors=(Actor("car", "car", CAR_DIMS, tr),), seed=seed)


def toward_pass(name: str, lane_y: float, speed: float, seed: int = 0) -> Scene:
    x0, x1 = 33.0, 3.0
    duration = (x0 - x1) / speed
    tr = Trajectory(0.0, x0, lane_y, math.pi, speed, (Segment(duration),))
    return site(name=name, duration=duration, actors=(Actor("car", "car", CAR_DIMS, tr),), seed=seed)


def car_passes() -> list[Scene]:
    out = []
    speeds = (4.0, 5.5, 3.5, 6.5, 4.5, 5.0, 3.8)
    for i, v in enumerate(speeds):
        out.append(crossing_pass(f"car-pass-rl-{i}", 11.75 if i % 2 == 0 else 14.25, +1, v, seed=100 + i))
    for i, v in enumerate(reversed(speeds)):
        out.append(crossing_pass(f"car-pass-lr-{i}", 16.5 if i % 2 == 0 else 19.0, -1, v, seed=200 + i))
    for i, (y, v) in enumerate(((-3.5, 4.0), (-1.5, 5.0), (-3.0, 3.5), (-1.0, 6.0), (-2.5, 4.5))):
        out.append(toward_pass(f"car-pass-toward-{i}", y, v, seed=300 + i))
    return out


def pedestrian_walk(seed: int = 400) -> Scene:
    speed = 1.3
    y0, y1 = -7.5, 11.0
    duration = (y1 - y0) / speed
    tr = Trajectory(0.0, 9.0, y0, math.pi / 2, speed, (Segment(duration),))
    return site(name="pedestrian-walk", duration=duration, actors=(Actor("pedestrian", "pedestrian", PEDESTRIAN_DIMS, tr),), seed=seed)


def cyclist_head_on(seed: int = 500) -> Scene:
    """A cyclist approaches head-on, then turns to ride broadside."""
    speed = 4.0
    segs = (Segment(3.5), Segment(1.5, yaw_rate=math.radians(60.0)), Segment(5.5))
    tr = Trajectory(0.0, 31.0, -3.0, math.pi, speed, segs)
    return site(
        name="cyclist-head-on",
        duration=tr.end_time,
        actors=(Actor("cyclist", "cyclist", CYCLIST_DIMS, tr),),
        seed=seed,
    )


def parked_cars(seed: int = 600) -> Scene:
    actors = tuple(
        Actor(f"parked-{i}", "car", CAR_DIMS, Trajectory(0.0, 24.5, y, 0.0, 0.0, (Segment(6.0),)))
        for i, y in enumerate((6.0, 8.8, 11.6))
    )
    return site(name="parked-cars", duration=6.0, actors=actors, seed=seed)


def clutter_shake(amplitude: float = 2.0, seed: int = 700) -> Scene:
    """Vegetation and a pole under mount shake, with one passing car."""
    scene = crossing_pass("clutter-shake", 14.25, +1, 4.5, seed=seed)
    return replace(scene, shake=Shake(amplitude=amplitude))


def scripted_scenarios() -> list[Scene]:
    return car_passes() + [pedestrian_walk(), cyclist_head_on(), parked_cars(), clutter_shake()]


def scenario_by_name(name: str) -> Scene:
    for s in scripted_scenarios():
        if s.name == name:
            return s
    raise KeyError(name)


def noise_free(scene: Scene) -> Scene:
    return replace(scene, lidar=replace(scene.lidar, noise_sigma=0.0), shake=replace(scene.shake, amplitude=0.0))

"""Tracker configuration: one YAML file covering every stage.

Angles are degrees in the file and radians in memory. Unknown keys are
rejected so that typos fail loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from roadtrack import classify as classify_mod
from roadtrack.detect import DetectConfig
from roadtrack.dimension import GridConfig
from roadtrack.existence import ExistenceConfig
from roadtrack.fuse import NoiseConfig
from roadtrack.manage import (
    ManageConfig,
    VisibilityMap,
    format_visibility_map,
    load_visibility_map,
    parse_visibility_map,
)
from roadtrack.model import BoundingBox, ModelError, RigidTransform
from roadtrack.preprocess import CropBox, PreprocessConfig


class ConfigError(ModelError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    manage: ManageConfig = field(default_factory=ManageConfig)
    c_max: float = 2.5
    t_history: float = 1.0

    def __post_init__(self):
        if not self.c_max > 0 or not self.t_history > 0:
            raise ConfigError("c_max and t_history must be > 0")


_DEG = {
    "pitch",
    "yaw",
    "roll",
    "delta_theta",
    "angle_step",
    "r_yaw",
    "init_sigma_yaw_rate",
    "cylinder_yaw_sigma",
}


def _section(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {', '.join(sorted(unknown))}")
    out = {}
    for k, v in data.items():
        if k in _DEG and isinstance(v, (int, float)):
            v = math.radians(v)
        elif isinstance(v, list):
            v = tuple(v)
        out[k] = v
    try:
        return cls(**out)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _crop_box(d: dict) -> CropBox:
    try:
        box = BoundingBox(tuple(d["center"]), math.radians(d.get("yaw", 0.0)), tuple(d["dims"]))
        return CropBox(box, d.get("label", "static"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid static box {d!r}: {exc}") from exc


def config_from_dict(d: dict | None, base_dir: Path | None = None) -> TrackerConfig:
    d = dict(d or {})
    known = {"preprocess", "detect", "fusion", "dimension", "existence", "classify", "manage", "associate"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    pre = dict(d.get("preprocess") or {})
    sensor = _section(RigidTransform, pre.pop("sensor_transform", None), "preprocess.sensor_transform")
    boxes = tuple(_crop_box(b) for b in pre.pop("static_boxes", None) or ())
    preprocess = _section(PreprocessConfig, pre, "preprocess")
    preprocess = replace(preprocess, sensor_transform=sensor, static_boxes=boxes)

    cls_sec = dict(d.get("classify") or {})
    d_max = tuple(cls_sec.pop("d_max", (20.0, 5.0, 5.0)))
    model_path = cls_sec.pop("model", None)
    if cls_sec:
        raise ConfigError(f"unknown keys in [classify]: {', '.join(sorted(cls_sec))}")
    if model_path is not None:
        model_path = _resolve(model_path, base_dir)
    class_model = classify_mod.load_class_model(model_path, d_max)

    man = dict(d.get("manage") or {})
    vis_path = man.pop("visibility_map", None)
    vis_text = man.pop("visibility", None)
    if vis_path is not None:
        vis = load_visibility_map(_resolve(vis_path, base_dir))
    elif vis_text is not None:
        vis = parse_visibility_map(vis_text)
    else:
        vis = VisibilityMap()
    manage = _section(ManageConfig, man, "manage")
    manage = replace(
        manage,
        noise=_section(NoiseConfig, d.get("fusion"), "fusion"),
        grid=_section(GridConfig, d.get("dimension"), "dimension"),
        existence=_section(ExistenceConfig, d.get("existence"), "existence"),
        class_model=class_model,
        visibility=vis,
    )
    assoc = dict(d.get("associate") or {})
    extra = set(assoc) - {"c_max", "t_history"}
    if extra:
        raise ConfigError(f"unknown keys in [associate]: {', '.join(sorted(extra))}")
    return TrackerConfig(
        preprocess=preprocess,
        detect=_section(DetectConfig, d.get("detect"), "detect"),
        manage=manage,
        c_max=float(assoc.get("c_max", 2.5)),
        t_history=float(assoc.get("t_history", 1.0)),
    )


def _resolve(path, base_dir: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else base_dir / p


def load_config(path: str | Path | None = None) -> TrackerConfig:
    if path is None:
        text = resources.files("roadtrack.data").joinpath("default_config.yaml").read_text("utf-8")
        return config_from_dict(yaml.safe_load(text))
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(data, p.parent)


def with_scene(cfg: TrackerConfig, crop_boxes, visibility: VisibilityMap | None = None) -> TrackerConfig:
    """Attach a site's static crop boxes (and optional visibility map)."""
    pre = replace(cfg.preprocess, static_boxes=tuple(crop_boxes))
    man = cfg.manage if visibility is None else replace(cfg.manage, visibility=visibility)
    return replace(cfg, preprocess=pre, manage=man)


def config_to_dict(cfg: TrackerConfig) -> dict:
    """Settings as a YAML-ready mapping; the class model is referenced by its
    defaults (``d_max`` only) and the visibility map is inlined as text."""

    def scalars(obj, skip=()):
        out = {}
        for f in fields(obj):
            if f.name in skip:
                continue
            v = getattr(obj, f.name)
            if is_dataclass(v):
                continue
            if f.name in _DEG and isinstance(v, float):
                v = math.degrees(v)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    pre = scalars(cfg.preprocess, skip=("static_boxes",))
    pre["sensor_transform"] = scalars(cfg.preprocess.sensor_transform)
    pre["static_boxes"] = [
        {
            "label": b.label,
            "center": [float(c) for c in b.box.center],
            "yaw": math.degrees(b.box.yaw),
            "dims": [float(x) for x in b.box.dims],
        }
        for b in cfg.preprocess.static_boxes
    ]
    return {
        "preprocess": pre,
        "detect": scalars(cfg.detect),
        "associate": {"c_max": cfg.c_max, "t_history": cfg.t_history},
        "fusion": scalars(cfg.manage.noise),
        "dimension": scalars(cfg.manage.grid),
        "existence": scalars(cfg.manage.existence),
        "classify": {"d_max": list(cfg.manage.class_model.d_max)},
        "manage": {
            **scalars(cfg.manage, skip=("noise", "grid", "existence", "class_model", "visibility")),
            "visibility": format_visibility_map(cfg.manage.visibility),
        },
    }


def scene_config(cfg: TrackerConfig, scene) -> TrackerConfig:
    """Tracker configuration for a simulated site: its crop boxes and its
    occluded ground regions."""
    vis = replace(cfg.manage.visibility, regions=tuple(("occluded", np.asarray(p, dtype=float)) for p in scene.occluded))
    return with_scene(cfg, scene.crop_boxes(), vis)

"""Run configuration: every calibration threshold in one place.

Values load from a TOML file so fixture runs and production runs can pin
different calibrations without code changes.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GATEWAY_TOKEN_ENV = "MIRAGE_GATEWAY_TOKEN"


@dataclass(frozen=True)
class GatewayConfig:
    mode: str = "mock"  # mock | remote
    script: Optional[str] = None  # mock: path to a scripted-scenario file
    base_url: str = "http://localhost:8080/v1"
    model: str = "gpt-5.4"
    timeout_s: float = 60.0
    max_in_flight: int = 4
    retry_jitter_s: float = 0.5

    def credential(self) -> Optional[str]:
        return os.environ.get(GATEWAY_TOKEN_ENV)


@dataclass(frozen=True)
class RunConfig:
    # face anchoring
    face_conf_min: float = 0.30
    face_nms_iou: float = 0.45
    face_aspect_min: float = 0.4
    face_aspect_max: float = 2.5
    face_area_max: float = 0.25
    # fallback body expansion (multiples of the face box)
    fallback_width_factor: float = 3.0
    fallback_height_factor: float = 6.0
    # pose abstraction
    keypoint_conf_min: float = 0.35
    min_pose_joints: int = 6
    arm_min_extent: float = 0.02
    gaze_symmetry_ratio: float = 0.1
    seated_knee_angle_deg: float = 110.0
    kneeling_ankle_tol: float = 0.05
    crouch_torso_leg_ratio: float = 0.6
    torso_tilt_deg: float = 30.0
    # relations
    overlap_iou: float = 0.25  # relative_position "overlapping" gate
    proximity_close: float = 0.15
    proximity_moderate: float = 0.35
    touch_iou_floor: float = 0.10
    pair_crop_margin: float = 0.15
    doc_overlap_iou: float = 0.10  # "overlap" tag in document interaction lines
    # object anchoring
    object_allowlist: tuple[str, ...] = ("tomb", "inscription", "staff", "drapery")
    allowlist_path: Optional[str] = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def with_gateway(self, **kwargs: Any) -> "RunConfig":
        return replace(self, gateway=replace(self.gateway, **kwargs))


def load_allowlist(path: str | Path) -> tuple[str, ...]:
    """Read an object-label allowlist: one label per line, # comments."""
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            labels.append(line.lower())
    return tuple(labels)


def load_config(path: str | Path | None) -> RunConfig:
    """Load a RunConfig from TOML; missing keys keep their defaults.

    Recognized tables: top-level scalar thresholds matching RunConfig field
    names, plus a [gateway] table matching GatewayConfig fields.
    """
    if path is None:
        return RunConfig()
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    gateway_data = data.pop("gateway", {})
    known = {f.name for f in fields(RunConfig)} - {"gateway"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    gw_known = {f.name for f in fields(GatewayConfig)}
    gw_unknown = set(gateway_data) - gw_known
    if gw_unknown:
        raise ValueError(f"unknown [gateway] config keys: {sorted(gw_unknown)}")
    if "object_allowlist" in data:
        data["object_allowlist"] = tuple(data["object_allowlist"])
    cfg = RunConfig(gateway=GatewayConfig(**gateway_data), **data)
    if cfg.allowlist_path:
        allowlist_path = Path(cfg.allowlist_path)
        if not allowlist_path.is_absolute():
            allowlist_path = Path(path).parent / allowlist_path
        cfg = replace(cfg, object_allowlist=load_allowlist(allowlist_path))
    return cfg

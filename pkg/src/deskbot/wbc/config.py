"""Controller gains and weights; every default overridable from a config file
section (see docs/schemas.md)."""

from __future__ import annotations

from dataclasses import dataclass, fields

import yaml


@dataclass
class WbcConfig:
    kp_linear: float = 3.0  # 1/s, task-space position gain
    kp_angular: float = 3.0
    kp_joint: float = 5.0
    kp_chassis: float = 2.0
    max_linear_speed: float = 0.30  # m/s task-space clamp
    max_angular_speed: float = 1.5  # rad/s
    tracking_weight: float = 1.0
    regularization: float = 1e-3  # lambda |dq|^2
    posture_weight: float = 1e-2  # mu |(q + dq dt) - q_pref|^2
    damper_gain: float = 2.0  # 1/s, collision velocity damper k
    collision_margin: float = 0.03  # m, d_margin
    collision_activation: float = 0.12  # m, rows added below this distance
    max_collision_rows: int = 40
    com_margin: float = 0.05  # m, footprint shrink
    gravity_load_limit: float = 30.0  # N*m static torque proxy bound

    @staticmethod
    def from_dict(doc: dict) -> "WbcConfig":
        cfg = WbcConfig()
        known = {f.name for f in fields(WbcConfig)}
        for k, v in (doc or {}).items():
            if k not in known:
                raise KeyError(f"unknown wbc config key {k!r}")
            setattr(cfg, k, type(getattr(cfg, k))(v))
        return cfg

    @staticmethod
    def load(path) -> "WbcConfig":
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
        return WbcConfig.from_dict(doc.get("wbc", doc))

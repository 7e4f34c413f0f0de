"""Application configuration: one flat JSON document plus ``key=value`` overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .deadreckon import TrackerConfig
from .errors import ValidationError
from .fusion import FusionState

CONFIG_ENV = "FOOTNAV_CONFIG"
_TRACKER_FIELDS = tuple(f.name for f in fields(TrackerConfig))


@dataclass(frozen=True)
class AppConfig:
    # tracker
    sample_rate: float = TrackerConfig.sample_rate
    hp_cutoff: float = TrackerConfig.hp_cutoff
    lp_cutoff: float = TrackerConfig.lp_cutoff
    stance_threshold: float = TrackerConfig.stance_threshold
    min_stance_duration: float = TrackerConfig.min_stance_duration
    g: float = TrackerConfig.g
    init_duration: float = TrackerConfig.init_duration
    stance_guard: float = TrackerConfig.stance_guard
    filter: str = TrackerConfig.filter
    kp: float = TrackerConfig.kp
    ki: float = TrackerConfig.ki
    beta: float = TrackerConfig.beta
    # fusion
    alpha: float = 0.8
    # map
    voxel_size: float = 0.05
    ground_max: float = 0.4
    body_max: float = 1.5
    connectivity: int = 26
    # agent and planner
    agent_height: float = 1.8
    agent_radius: float = 0.3
    step_clearance: float = 0.15
    inflation_radius: float | None = None
    arrival_radius: float = 0.5

    def __post_init__(self):
        self.tracker()
        FusionState(alpha=self.alpha)
        if not self.voxel_size > 0:
            raise ValidationError("voxel_size must be positive")
        if not 0 < self.ground_max < self.body_max:
            raise ValidationError("height thresholds must satisfy 0 < ground_max < body_max")
        if self.connectivity not in (6, 26):
            raise ValidationError("connectivity must be 6 or 26")
        if not self.agent_height > self.step_clearance >= 0:
            raise ValidationError("need agent_height > step_clearance >= 0")
        if self.agent_radius < 0 or (self.inflation_radius is not None and self.inflation_radius < 0):
            raise ValidationError("agent_radius and inflation_radius must be non-negative")
        if not self.arrival_radius > 0:
            raise ValidationError("arrival_radius must be positive")

    def tracker(self) -> TrackerConfig:
        return TrackerConfig(**{k: getattr(self, k) for k in _TRACKER_FIELDS})

    @property
    def thresholds(self):
        return (self.ground_max, self.body_max)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "AppConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(f"bad config value: {exc}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=(), environ=None) -> AppConfig:
    """Defaults, then the JSON file (``path`` or ``$FOOTNAV_CONFIG``), then ``key=value`` overrides."""
    environ = os.environ if environ is None else environ
    path = path or environ.get(CONFIG_ENV) or None
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError(f"config {path} must hold a JSON object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"override {item!r} must look like key=value")
        doc[key.strip()] = _parse_value(value.strip())
    return AppConfig.from_dict(doc)


def with_overrides(cfg: AppConfig, **changes) -> AppConfig:
    return replace(cfg, **changes)

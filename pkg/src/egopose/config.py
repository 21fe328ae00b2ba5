"""Run configuration: JSON file with defaults for every field.

Unknown keys are rejected by name, bad values are rejected with the full field
path, and a loaded configuration serializes back to an equivalent document
(load -> dump -> load is the identity).
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ParseError, UnknownKey, ValidationError


@dataclass
class CameraConfig:
    nose_offset: float = 0.04
    pitch_down_deg: float = 15.0
    fov_deg: float = 200.0
    near_exclusion: float = 0.12


@dataclass
class LossConfig:
    body_pos: float = 10.0
    finger_pos: float = 100.0
    occluded_multiplier: float = 1.2
    parent_local: float = 3.0
    bone_length_body: float = 7.0
    bone_length_finger: float = 10.0
    occlusion_mask: float = 0.025


@dataclass
class TrainSection:
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_schedule: list = field(default_factory=lambda: [256, 512, 1024, 1024, 1024])
    window: int = 27
    fps: float = 30.0
    stride: int = 1
    hidden: int = 512
    mlp_hidden: list = field(default_factory=lambda: [512, 512])


@dataclass
class SplitConfig:
    ratio: float = 0.8
    held_out_subjects: list = field(default_factory=list)


@dataclass
class RunConfig:
    corpus_paths: list = field(default_factory=list)
    profile: str = ""
    unit_scale: float = 0.01
    task: str = "inside-out"
    seed: int = 0
    out_dir: str = "out"
    inflation: float = 0.01
    threshold_cm: float | None = None
    smooth_beta: float = 0.8
    camera: CameraConfig = field(default_factory=CameraConfig)
    loss_weights: LossConfig = field(default_factory=LossConfig)
    train: TrainSection = field(default_factory=TrainSection)
    split: SplitConfig = field(default_factory=SplitConfig)

    def to_dict(self):
        return asdict(self)

    def dump(self, fileobj):
        json.dump(self.to_dict(), fileobj, indent=2, sort_keys=True)


_SECTIONS = {
    "camera": CameraConfig,
    "loss_weights": LossConfig,
    "train": TrainSection,
    "split": SplitConfig,
}

_NUMERIC = (int, float)


def _check_type(path, value, expected):
    if expected is float:
        if not isinstance(value, _NUMERIC) or isinstance(value, bool):
            raise ValidationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if expected is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValidationError(f"{path}: expected an integer, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ValidationError(f"{path}: expected a string, got {value!r}")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ValidationError(f"{path}: expected a list, got {value!r}")
        return list(value)
    return value


def _fill_section(cls, data, path):
    obj = cls()
    fields = {f: type(getattr(obj, f)) for f in vars(obj)}
    for key, value in data.items():
        if key not in fields:
            raise UnknownKey(f"unknown key '{path}{key}'")
        setattr(obj, key, _check_type(f"{path}{key}", value, fields[key]))
    return obj


def _validate(cfg):
    def positive(path, v):
        if v <= 0:
            raise ValidationError(f"{path}: must be positive, got {v}")

    positive("unit_scale", cfg.unit_scale)
    positive("camera.fov_deg", cfg.camera.fov_deg)
    if cfg.camera.fov_deg > 360.0:
        raise ValidationError("camera.fov_deg: must be at most 360")
    if cfg.camera.near_exclusion < 0:
        raise ValidationError("camera.near_exclusion: must be non-negative")
    for name in vars(cfg.loss_weights):
        v = getattr(cfg.loss_weights, name)
        if v < 0:
            raise ValidationError(f"loss_weights.{name}: must be non-negative, got {v}")
    positive("train.learning_rate", cfg.train.learning_rate)
    positive("train.epochs", cfg.train.epochs)
    positive("train.window", cfg.train.window)
    positive("train.fps", cfg.train.fps)
    positive("train.stride", cfg.train.stride)
    positive("train.hidden", cfg.train.hidden)
    if len(cfg.train.batch_schedule) != cfg.train.epochs:
        raise ValidationError(
            f"train.batch_schedule: length {len(cfg.train.batch_schedule)} "
            f"does not match train.epochs {cfg.train.epochs}")
    for i, b in enumerate(cfg.train.batch_schedule):
        if not isinstance(b, int) or isinstance(b, bool) or b <= 0:
            raise ValidationError(
                f"train.batch_schedule[{i}]: must be a positive integer, got {b!r}")
    if len(cfg.train.mlp_hidden) != 2:
        raise ValidationError("train.mlp_hidden: expected two layer widths")
    if not 0.0 < cfg.split.ratio < 1.0:
        raise ValidationError(f"split.ratio: must be in (0, 1), got {cfg.split.ratio}")
    if not 0.0 <= cfg.smooth_beta < 1.0:
        raise ValidationError(f"smooth_beta: must be in [0, 1), got {cfg.smooth_beta}")
    if cfg.inflation < 0:
        raise ValidationError("inflation: must be non-negative")
    if cfg.threshold_cm is not None and cfg.threshold_cm <= 0:
        raise ValidationError("threshold_cm: must be positive when set")
    if cfg.task not in ("inside-out", "three-point", "finger-synthesis"):
        raise ValidationError(f"task: unknown task {cfg.task!r}")


def from_dict(data):
    """Build and validate a RunConfig from a plain dict."""
    if not isinstance(data, dict):
        raise ValidationError("configuration root must be an object")
    cfg = RunConfig()
    scalars = {
        "corpus_paths": list, "profile": str, "unit_scale": float, "task": str,
        "seed": int, "out_dir": str, "inflation": float, "smooth_beta": float,
    }
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValidationError(f"{key}: expected an object")
            setattr(cfg, key, _fill_section(_SECTIONS[key], value, f"{key}."))
        elif key == "threshold_cm":
            cfg.threshold_cm = None if value is None else _check_type(
                "threshold_cm", value, float)
        elif key in scalars:
            setattr(cfg, key, _check_type(key, value, scalars[key]))
        else:
            raise UnknownKey(f"unknown key {key!r}")
    _validate(cfg)
    return cfg


def load_config(path, check_files=True):
    """Load and validate a JSON run configuration."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    cfg = from_dict(data)
    if check_files:
        base = Path(path).parent
        for p in [cfg.profile] + list(cfg.corpus_paths):
            if p and not (base / p).exists() and not Path(p).exists():
                raise ValidationError(f"referenced file does not exist: {p}")
    return cfg

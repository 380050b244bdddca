"""Run configuration: nested dataclasses, JSON files, dotted CLI overrides.

Precedence is CLI flag > config file > dataclass default; every leaf field
is addressable as --section.field (e.g. --trainer.batch_size 128).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass

from .encoder import EncoderParams
from .errors import ConfigError
from .render import Camera
from .reward import RewardWeights
from .sac import TrainerConfig


@dataclass
class ReferenceSource:
    """Exactly one of video_dir or gait_script must be set."""

    video_dir: str = ""
    gait_script: str = ""
    fps: float = 25.0
    segment_threshold: int = -1  # >= 0: threshold-segment an unmasked video


@dataclass
class EncoderChoice:
    kind: str = "builtin"   # "builtin" | "bridge"
    seed: int = 0
    dim: int = 64
    bridge_addr: str = ""   # host:port; NIL_BRIDGE_ADDR env overrides

    def params(self) -> EncoderParams:
        return EncoderParams(seed=self.seed, dim=self.dim)


@dataclass
class RunConfig:
    morphology: str = "walker2d"   # shipped name or a JSON path
    reference: ReferenceSource = field(default_factory=ReferenceSource)
    camera: Camera = field(default_factory=Camera)
    reward: RewardWeights = field(default_factory=RewardWeights)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    encoder: EncoderChoice = field(default_factory=EncoderChoice)
    out_dir: str = "runs/out"
    seed: int = 0


def flatten_defaults(obj=None, prefix="") -> dict[str, object]:
    """dotted-name -> default value for every overridable leaf field."""
    if obj is None:
        obj = RunConfig()
    out: dict[str, object] = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if is_dataclass(v):
            out.update(flatten_defaults(v, prefix=f"{prefix}{f.name}."))
        else:
            out[f"{prefix}{f.name}"] = v
    return out


def _coerce(value, ftype, name):
    if ftype is bool:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes"):
            return True
        if str(value).lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{name}: cannot parse bool from {value!r}")
    if ftype is tuple or isinstance(value, str) and ftype is None:
        return value
    try:
        return ftype(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from e


def _apply_dotted(obj, dotted: str, value):
    parts = dotted.split(".")
    target = obj
    for p in parts[:-1]:
        if not hasattr(target, p):
            raise ConfigError(f"unknown config section {p!r} in {dotted!r}")
        target = getattr(target, p)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config field {dotted!r}")
    current = getattr(target, leaf)
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = tuple(int(x) for x in value.split(",") if x)
        else:
            value = tuple(value)
    elif isinstance(current, bool):
        value = _coerce(value, bool, dotted)
    elif current is not None and not isinstance(value, type(current)):
        value = _coerce(value, type(current), dotted)
    object.__setattr__(target, leaf, value) if _is_frozen(target) else setattr(
        target, leaf, value
    )


def _is_frozen(obj) -> bool:
    return is_dataclass(obj) and obj.__dataclass_params__.frozen


def _rebuild_frozen(cfg: RunConfig) -> RunConfig:
    """Frozen sections (camera, reward, encoder params) are mutated via
    object.__setattr__ above; __post_init__ checks are re-run here."""
    cfg.camera = Camera(**dataclasses.asdict(cfg.camera))
    cfg.reward = RewardWeights(**dataclasses.asdict(cfg.reward))
    return cfg


def _update_from_dict(obj, data: dict, prefix=""):
    for key, value in data.items():
        name = f"{prefix}{key}"
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config field {name!r}")
        current = getattr(obj, key)
        if is_dataclass(current) and isinstance(value, dict):
            _update_from_dict(current, value, prefix=f"{name}.")
        else:
            _apply_dotted(obj, key, value)


def load_run_config(
    path: str | None = None,
    overrides: dict[str, object] | None = None,
    validate: bool = True,
) -> RunConfig:
    """Defaults, then the JSON file, then dotted CLI overrides."""
    cfg = RunConfig()
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from e
        _update_from_dict(cfg, data)
    for dotted, value in (overrides or {}).items():
        _apply_dotted(cfg, dotted, value)
    cfg = _rebuild_frozen(cfg)
    if validate:
        validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    has_video = bool(cfg.reference.video_dir)
    has_script = bool(cfg.reference.gait_script)
    if has_video == has_script:
        raise ConfigError(
            "exactly one reference source required: set reference.video_dir "
            "or reference.gait_script"
        )
    if cfg.encoder.kind not in ("builtin", "bridge"):
        raise ConfigError(f"unknown encoder kind {cfg.encoder.kind!r}")
    morph_path = resolve_morphology(cfg.morphology)
    if not os.path.isfile(morph_path):
        raise ConfigError(f"morphology not found: {cfg.morphology}")
    if has_video and not os.path.isdir(cfg.reference.video_dir):
        raise ConfigError(f"video dir not found: {cfg.reference.video_dir}")
    if has_script:
        script = resolve_gait(cfg.reference.gait_script)
        if not os.path.isfile(script):
            raise ConfigError(f"gait script not found: {cfg.reference.gait_script}")


def resolve_morphology(name_or_path: str) -> str:
    if os.path.sep in name_or_path or name_or_path.endswith(".json"):
        return name_or_path
    from .assets import morphology_path

    return morphology_path(name_or_path)


def resolve_gait(name_or_path: str) -> str:
    if os.path.sep in name_or_path or name_or_path.endswith(".json"):
        return name_or_path
    from .assets import gait_path

    return gait_path(name_or_path)


def config_to_json(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)

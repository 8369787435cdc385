"""Flat `section.key = value` pipeline configuration.

Unknown keys fail fast; `#` starts a comment; command-line flags override
file values, which override defaults. The effective (merged) configuration
is echoed into every output directory for provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .augment import AugmentConfig
from .data import DEFAULT_SAMPLING_RATIOS, NUM_CLASSES, SamplerConfig
from .resnet import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_ratios(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != NUM_CLASSES:
        raise ConfigError(f"need {NUM_CLASSES} comma-separated ratios, got {len(parts)}")
    return tuple(Fraction(p) for p in parts)


def _parse_triple(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"need 3 comma-separated values, got {len(parts)}")
    return tuple(float(p) for p in parts)


@dataclass
class SplitConfig:
    fraction: float = 0.8
    granularity: str = "video"
    seed: int = 0


@dataclass
class PipelineConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    split: SplitConfig = field(default_factory=SplitConfig)

    def set_seed(self, seed: int):
        """Single master seed for every seeded stage."""
        self.train.seed = seed
        self.augment.seed = seed
        self.sampler.seed = seed
        self.split.seed = seed


# section.key -> (target section attr, field name, parser)
_SCHEMA = {
    "model.num_classes": int,
    "model.input_channels": int,
    "model.input_size": int,
    "model.width_multiplier": float,
    "model.batchnorm_momentum": float,
    "model.batchnorm_epsilon": float,
    "train.learning_rate": float,
    "train.batch_size": int,
    "train.epochs": int,
    "train.lr_step_epochs": int,
    "train.lr_gamma": float,
    "train.weight_decay": float,
    "train.beta1": float,
    "train.beta2": float,
    "train.epsilon": float,
    "train.seed": int,
    "train.checkpoint_every": int,
    "augment.flip_probability": float,
    "augment.max_rotation_degrees": float,
    "augment.normalize_mean": _parse_triple,
    "augment.normalize_std": _parse_triple,
    "augment.target_size": int,
    "augment.seed": int,
    "sampler.ratios": _parse_ratios,
    "sampler.seed": int,
    "split.fraction": float,
    "split.granularity": str,
    "split.seed": int,
}


def parse_overrides(lines) -> dict[str, object]:
    """Parse `section.key = value` lines into typed values; unknown keys error."""
    parsed: dict[str, object] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            parsed[key] = _SCHEMA[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}")
    return parsed


def load_config(path=None, overrides: dict[str, object] | None = None,
                seed: int | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if seed is not None:
        cfg.set_seed(seed)
    merged: dict[str, object] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            merged.update(parse_overrides(f.readlines()))
    for key, value in (overrides or {}).items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    for key, value in merged.items():
        section, _, name = key.partition(".")
        setattr(getattr(cfg, section), name, value)
    # re-run dataclass validation after mutation
    cfg.model.validate()
    cfg.train.__post_init__()
    cfg.augment.__post_init__()
    cfg.sampler.__post_init__()
    if not 0 < cfg.split.fraction < 1:
        raise ConfigError("split.fraction must be in (0, 1)")
    if cfg.split.granularity not in ("video", "frame"):
        raise ConfigError(f"split.granularity must be video or frame")
    return cfg


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(cfg: PipelineConfig) -> str:
    """Render the effective config in the same flat format it is parsed from."""
    lines = []
    for key in sorted(_SCHEMA):
        section, _, name = key.partition(".")
        lines.append(f"{key} = {_fmt(getattr(getattr(cfg, section), name))}")
    return "\n".join(lines) + "\n"

"""Flat ``key=value`` configuration.

One line per key, ``#`` starts a comment, tuples are comma separated.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # data
    image_size: int = 32
    n_train: int = 32
    n_val: int = 8
    flip_prob: float = 0.5
    hole_fill: tuple[float, ...] = (0.485, 0.456, 0.406)
    sketch_guided: bool = False
    sketch_threshold: float = 0.65
    sketch_min_area: int = 100
    # optimisation
    batch_size: int = 4
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    max_steps: int = 1000
    patience: int = 30
    seed: int = 0
    dtype: str = "float32"
    freeze_discriminator: bool = False
    # loss weights
    lambda1: float = 1.2
    lambda2: float = 1.0
    lambda_p: float = 0.004
    lambda_adv: float = 0.01
    # architecture
    base_width: int = 16
    dilations: tuple[int, ...] = (2, 4, 8, 16)
    n_heads: int = 2
    patch_size: int = 3
    lambda_m: float = 1e4
    key_stride: int = 1
    gen_slope: float = 0.2
    disc_slope: float = 0.01
    embed_slope: float = 0.01
    softplus_form: str = "printed"
    temperature_floor: float = 1e-4
    local_crop_fraction: float = 0.5
    sn_eps: float = 1e-12

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigError("batch_size must be >= 1 and max_steps >= 0")
        if self.image_size % 4:
            raise ConfigError(f"image_size {self.image_size} must be divisible by 4")
        if self.base_width * 4 % self.n_heads:
            raise ConfigError("attention channels (4 * base_width) must divide evenly across heads")
        if self.patch_size % 2 == 0:
            raise ConfigError("patch_size must be odd")
        if self.softplus_form not in ("printed", "conventional"):
            raise ConfigError(f"softplus_form must be 'printed' or 'conventional', got {self.softplus_form!r}")
        if self.temperature_floor < 0:
            raise ConfigError("temperature_floor must be non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if len(self.hole_fill) != 3:
            raise ConfigError("hole_fill needs three values")
        if min(self.lambda1, self.lambda2, self.lambda_p, self.lambda_adv) < 0:
            raise ConfigError("loss weights must be non-negative")

    @property
    def in_channels(self) -> int:
        return 5 if self.sketch_guided else 4

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    # -- text form -------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, overrides: Iterable[str] = ()) -> "TrainConfig":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = (part.strip() for part in item.split("=", 1))
            values[key] = value
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path, overrides: Iterable[str] = ()) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), overrides)

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(fields))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            default = fields[key].default
            try:
                kwargs[key] = _parse(raw, default)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
        return cls(**kwargs)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(part) for part in raw.split(",") if part.strip())
    return raw

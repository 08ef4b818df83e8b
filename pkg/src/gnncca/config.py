"""Flat key=value run configuration with command-line overrides.

A config file holds one `key = value` per line (# starts a comment).
Unknown keys are rejected, every value is validated against the owning
module's constraints when the config is turned into concrete objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .numeric import TrainSchedule

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


@dataclass
class RunConfig:
    descriptor_dim: int = 512
    steps: int = 4
    message_source: str = "self"
    node_aggregation: str = "sum"
    edge_symmetrize: bool = True
    seed: int = 0
    base_lr: float = 5e-3
    warmup_epochs: int = 5
    total_epochs: int = 20
    batch_size: int = 64
    momentum: float = 0.0
    positive_weight: float = 1.0
    standardize_features: bool = True
    normalize_descriptors: bool = False
    binarize_threshold: float = 0.5
    prune: bool = True
    split: bool = True
    baseline_method: str = "l2_th"
    appearance_threshold: float | None = None
    spatial_threshold: float | None = None
    normalize_distances: bool = True
    per_frame_normalize: bool = False
    touched: set = field(default_factory=set, repr=False, compare=False)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            base_lr=self.base_lr,
            warmup_epochs=self.warmup_epochs,
            total_epochs=self.total_epochs,
            batch_size=self.batch_size,
            momentum=self.momentum,
        )

    def validate(self) -> "RunConfig":
        self.schedule()  # raises on bad optimizer settings
        if self.descriptor_dim < 1:
            raise ConfigError(f"descriptor_dim must be >= 1, got {self.descriptor_dim}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.message_source not in ("self", "neighbor"):
            raise ConfigError("message_source must be self|neighbor")
        if self.node_aggregation not in ("sum", "mean"):
            raise ConfigError("node_aggregation must be sum|mean")
        if not 0.0 <= self.binarize_threshold <= 1.0:
            raise ConfigError(
                f"binarize_threshold must be in [0, 1], got {self.binarize_threshold}"
            )
        if self.positive_weight <= 0:
            raise ConfigError(
                f"positive_weight must be > 0, got {self.positive_weight}"
            )
        return self


_FIELD_TYPES = {
    f.name: f.type for f in fields(RunConfig) if f.name != "touched"
}


def _coerce(key: str, value: str):
    ftype = _FIELD_TYPES[key]
    text = value.strip()
    if ftype == "bool":
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if ftype == "int":
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc
    if ftype == "float":
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from exc
    if ftype == "float | None":
        if text.lower() in ("none", ""):
            return None
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number or none, got {value!r}") from exc
    return text


def apply_setting(config: RunConfig, key: str, value: str) -> None:
    key = key.strip()
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(config, key, _coerce(key, value))
    config.touched.add(key)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    config = base if base is not None else RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            try:
                apply_setting(config, key, value)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return config

"""Training configuration with YAML loading and field-level validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data.metrics import ms_to_frames
from .errors import ConfigError


@dataclass
class TrainConfig:
    # windows and rates
    O: int = 25
    F: int = 25
    fps: float = 25.0
    horizons_ms: list = field(default_factory=lambda: [80, 160, 320, 400, 1000])
    window_stride: int = 5
    eval_stride: int = 25
    # optimisation
    learning_rate: float = 0.001
    n_critic: int = 5
    batch_size: int = 32
    epochs_sln: int = 200
    epochs_dln: int = 200
    clip_c: float = 0.01
    lambda_j: float = 1.0
    m: int | None = None  # hard joints; None means ceil(N / 4)
    seed: int = 0
    # architecture
    encoder_channels: list = field(default_factory=lambda: [64, 64, 64])
    encoder_layout: str = "RVR"
    tiu_blocks: int = 3
    tiu_channels: int = 64
    tiu_kernel: int = 3
    tiu_dilations: list = field(default_factory=lambda: [1, 2, 4])
    tiu_dropout: float = 0.1
    hidden: int = 256
    critic_layers: int = 3
    critic_units: int = 256
    dln_blocks: int = 3
    dln_layers: int = 4
    dln_channels: int = 64
    dln_kernel: int = 3
    dln_dropout: float = 0.2
    # data
    synth_sequences: int = 200
    synth_frames: int = 100
    split: list = field(default_factory=lambda: [0.7, 0.15, 0.15])
    corpus: str | None = None  # directory of CSV files; None means synthetic
    skeleton: str | None = None
    checkpoint: str = "hvis.ckpt"
    reports: str = "reports"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ["O", "F", "n_critic", "batch_size", "window_stride", "eval_stride", "tiu_blocks",
                    "tiu_channels", "tiu_kernel", "hidden", "critic_layers", "critic_units",
                    "dln_blocks", "dln_layers", "dln_channels", "dln_kernel", "synth_sequences",
                    "synth_frames"]
        for name in positive:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        for name in ("epochs_sln", "epochs_dln", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(name, f"must be a non-negative integer, got {v!r}")
        for name in ("fps", "learning_rate", "clip_c", "lambda_j"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        for name in ("tiu_dropout", "dln_dropout"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0 <= v < 1:
                raise ConfigError(name, f"must lie in [0, 1), got {v!r}")
        if self.m is not None and (not isinstance(self.m, int) or self.m < 0):
            raise ConfigError("m", f"must be a non-negative integer or null, got {self.m!r}")
        if not self.horizons_ms:
            raise ConfigError("horizons_ms", "needs at least one horizon")
        for ms in self.horizons_ms:
            frames = ms * self.fps / 1000.0
            if abs(frames - round(frames)) > 1e-9 or round(frames) < 1:
                raise ConfigError("horizons_ms", f"{ms} ms is not a whole number of frames at {self.fps} fps")
            if round(frames) > self.F:
                raise ConfigError("horizons_ms", f"{ms} ms is beyond the {self.F}-frame prediction window")
        if len(self.encoder_channels) != len(self.encoder_layout):
            raise ConfigError("encoder_channels", f"needs one width per layer of {self.encoder_layout!r}")
        if set(self.encoder_layout) - set("RVG"):
            raise ConfigError("encoder_layout", "may only contain R, V and G")
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("split", f"must be three positive fractions summing to 1, got {self.split!r}")
        if self.synth_frames < 2 * (self.O + self.F):
            raise ConfigError("synth_frames", f"must be at least 2*(O+F) = {2 * (self.O + self.F)}")

    @property
    def horizon_frames(self) -> list[int]:
        return [ms_to_frames(ms, self.fps) for ms in self.horizons_ms]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        return cls.from_dict(data)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

"""Model, training and dataset configuration with JSON round-tripping.

The JSON layout mirrors the dataclass field names exactly:
``{"model": {...DcnConfig...}, "train": {...TrainConfig...}, "data": {...DataConfig...}}``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """A configuration value violates its documented constraint."""


DIRECTION_MODES = ("both", "question_guided", "image_guided")
SUMMARY_MODES = ("attention", "average")
EXTRACTION_MODES = ("layer_attention", "last_layer")
HEAD_VARIANTS = (16, 17, 18)
N_LEVELS = 4


@dataclass
class DcnConfig:
    """Architecture dimensions and ablation toggles.

    ``head`` selects the scoring variant: 16 = bilinear answer-embedding
    score, 17 = MLP on summed summaries, 18 = MLP on concatenated summaries.
    """

    d: int = 32               # co-attention feature width
    e: int = 16               # word embedding width
    heads: int = 4            # parallel attention maps (h)
    memory_slots: int = 3     # nowhere-to-attend columns (K)
    layers: int = 2           # stacked co-attention layers (L)
    t: int = 16               # image regions, a perfect square
    n_max: int = 14           # question length cap
    c: int = 8                # base channel count of the shallowest feature level
    n_objects: int = 8
    n_attributes: int = 8
    n_fillers: int = 6
    n_answers: int = 8
    h_mlp: int = 24           # hidden width of the level-attention scorer
    h_summary: int | None = None   # hidden width of summary scorers; None -> d
    h_head: int = 64          # hidden width of the answer MLP heads
    direction: str = "both"
    head: int = 17
    summary: str = "attention"
    extraction: str = "layer_attention"

    @property
    def d_head(self) -> int:
        return self.d // self.heads

    @property
    def grid(self) -> int:
        return int(round(math.sqrt(self.t)))

    @property
    def summary_hidden(self) -> int:
        return self.d if self.h_summary is None else self.h_summary

    @property
    def vocab_size(self) -> int:
        # id 0 is the out-of-vocabulary token
        return 1 + self.n_objects + self.n_fillers + self.n_attributes

    def level_channels(self, j: int) -> int:
        return self.c * (2 ** j)

    def level_side(self, j: int) -> int:
        # spatial sides halve level to level and bottom out at the region grid
        return self.grid * (2 ** (N_LEVELS - 1 - j))

    def validate(self) -> None:
        if self.d <= 0 or self.d % 2 != 0:
            raise ConfigError(f"d must be a positive even integer, got d={self.d}")
        if self.heads <= 0 or self.d % self.heads != 0:
            raise ConfigError(f"d must be divisible by heads: d={self.d}, heads={self.heads}")
        if self.memory_slots < 0:
            raise ConfigError(f"memory_slots must be >= 0, got {self.memory_slots}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        g = self.grid
        if g * g != self.t or self.t <= 0:
            raise ConfigError(f"t must be a perfect square, got t={self.t}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.e < 1:
            raise ConfigError(f"e must be >= 1, got {self.e}")
        if self.c < 1:
            raise ConfigError(f"c must be >= 1, got {self.c}")
        if self.head not in HEAD_VARIANTS:
            raise ConfigError(f"head must be one of {HEAD_VARIANTS}, got {self.head}")
        if self.direction not in DIRECTION_MODES:
            raise ConfigError(f"direction must be one of {DIRECTION_MODES}, got {self.direction!r}")
        if self.summary not in SUMMARY_MODES:
            raise ConfigError(f"summary must be one of {SUMMARY_MODES}, got {self.summary!r}")
        if self.extraction not in EXTRACTION_MODES:
            raise ConfigError(
                f"extraction must be one of {EXTRACTION_MODES}, got {self.extraction!r}")
        if self.n_objects < 1 or self.n_attributes < 1 or self.n_fillers < 0:
            raise ConfigError("vocabulary sizes must be positive")
        if self.n_answers < 2:
            raise ConfigError(f"n_answers must be >= 2, got {self.n_answers}")
        if self.h_mlp < 1 or self.h_head < 1 or self.summary_hidden < 1:
            raise ConfigError("hidden widths must be >= 1")


@dataclass
class TrainConfig:
    """Optimizer schedule, regularization and reproducibility knobs."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    decay_epochs: int = 7
    max_epochs: int = 20
    batch_size: int = 4
    weight_decay: float = 0.0001
    dropout_fc: float = 0.3
    dropout_lstm: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        # lr = 0 is allowed so frozen-optimizer runs stay expressible
        if not 0.0 <= self.lr < 1.0:
            raise ConfigError(f"lr must lie in [0, 1), got {self.lr}")
        if self.adam_eps <= 0.0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.decay_epochs < 1:
            raise ConfigError(f"decay_epochs must be >= 1, got {self.decay_epochs}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("dropout_fc", "dropout_lstm"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {v}")


@dataclass
class DataConfig:
    """Synthetic dataset sizing."""

    n_train: int = 5000
    n_test: int = 1000
    noise_sigma: float = 0.1

    def validate(self) -> None:
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("dataset sizes must be positive")
        if self.noise_sigma < 0.0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass
class RunConfig:
    """Bundle of the three config sections, the unit the CLI reads/writes."""

    model: DcnConfig = dataclasses.field(default_factory=DcnConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    data: DataConfig = dataclasses.field(default_factory=DataConfig)

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.data.validate()

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        cfg = cls()
        for section_name, section in (("model", cfg.model), ("train", cfg.train),
                                      ("data", cfg.data)):
            block = raw.get(section_name, {})
            if not isinstance(block, dict):
                raise ConfigError(f"section {section_name!r} must be an object")
            valid = {f.name for f in dataclasses.fields(section)}
            for key, value in block.items():
                if key not in valid:
                    raise ConfigError(f"unknown field {section_name}.{key}")
                setattr(section, key, value)
        cfg.validate()
        return cfg


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig.from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply repeatable ``--set section.field=value`` overrides in order."""
    raw = cfg.to_dict()
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, text = pair.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"--set key must be section.field, got {key!r}")
        section, field_name = parts
        if section not in raw:
            raise ConfigError(f"unknown config section {section!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        raw[section][field_name] = value
    return RunConfig.from_dict(raw)


def paper_dims() -> DcnConfig:
    """Architecture at full scale: 300-wide embeddings, 1024-wide layers,
    14x14 regions, 3113 answers."""
    return DcnConfig(
        d=1024, e=300, heads=4, memory_slots=3, layers=3, t=196, n_max=14,
        c=256, n_answers=3113, h_mlp=724, h_head=1024, head=16,
    )

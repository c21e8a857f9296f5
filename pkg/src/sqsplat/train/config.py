"""Training hyperparameters and named presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_LEARNING_RATES = {
    "means": 1.6e-4,  # multiplied by scene_extent
    "opacity_logits": 0.05,
    "log_scales": 5e-3,
    "quats": 1e-3,
    "sh_dc": 2.5e-3,
    "sh_rest": 1.25e-4,
}

PRESETS = {
    # Poses from ground truth vs poses from the estimator.
    "rt-poses": {"sh_degree_init": 2, "sh_increase_interval": 1000, "densify_start_iter": 500},
    "est-poses": {"sh_degree_init": 1, "sh_increase_interval": 500, "densify_start_iter": 100},
    "original": {"sh_degree_init": 0, "sh_increase_interval": 1000, "densify_start_iter": 500, "total_iterations": 30000},
}


@dataclass
class TrainConfig:
    beta: float = 0.2
    steps_per_image: int = 5
    total_iterations: int = 1500
    sh_degree_init: int = 2
    sh_degree_max: int = 3
    sh_increase_interval: int = 1000
    densify_interval: int = 100
    densify_start_iter: int = 500
    learning_rates: dict = field(default_factory=lambda: dict(DEFAULT_LEARNING_RATES))
    densify_grad_threshold: float = 2e-4
    prune_opacity_threshold: float = 0.005
    # None means 1% of scene_extent.
    split_scale_threshold: float | None = None
    split_factor: float = 1.6
    scene_extent: float = 1.0
    opacity_reset_interval: int = 0  # 0 disables resets
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-15
    chamfer_interval: int = 100
    checkpoint_interval: int = 500

    def __post_init__(self):
        if not 0 <= self.sh_degree_init <= self.sh_degree_max <= 3:
            raise ValueError("need 0 <= sh_degree_init <= sh_degree_max <= 3")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.steps_per_image < 1:
            raise ValueError("steps_per_image must be >= 1")
        lrs = dict(DEFAULT_LEARNING_RATES)
        lrs.update(self.learning_rates or {})
        unknown = set(lrs) - set(DEFAULT_LEARNING_RATES)
        if unknown:
            raise ValueError(f"unknown learning-rate groups: {sorted(unknown)}")
        self.learning_rates = lrs
        self.adam_betas = tuple(self.adam_betas)

    @property
    def split_threshold(self) -> float:
        if self.split_scale_threshold is not None:
            return self.split_scale_threshold
        return 0.01 * self.scene_extent

    def sh_degree_at(self, iteration: int) -> int:
        """Active SH degree at 1-based ``iteration``."""
        return min(self.sh_degree_max, self.sh_degree_init + iteration // self.sh_increase_interval)

    def is_densify_iteration(self, iteration: int) -> bool:
        return (
            self.densify_interval > 0
            and iteration >= self.densify_start_iter
            and iteration % self.densify_interval == 0
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        d = dict(PRESETS[name])
        d.update(overrides)
        return cls(**d)

    def updated(self, **overrides) -> "TrainConfig":
        d = self.to_dict()
        lrs = overrides.pop("learning_rates", None)
        d.update(overrides)
        if lrs:
            d["learning_rates"] = {**d["learning_rates"], **lrs}
        return TrainConfig.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

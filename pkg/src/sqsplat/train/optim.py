"""Adam over the Gaussian parameter groups."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..gaussians import GaussianModel
from .backward import GradientBuffer
from .config import TrainConfig

GROUPS = ("means", "log_scales", "quats", "opacity_logits", "sh_dc", "sh_rest")


def _group_views(obj) -> dict[str, np.ndarray]:
    """Per-group array views into a model or gradient buffer (same layout)."""
    return {
        "means": obj.means,
        "log_scales": obj.log_scales,
        "quats": obj.quats,
        "opacity_logits": obj.opacity_logits,
        "sh_dc": obj.sh[:, 0, :],
        "sh_rest": obj.sh[:, 1:, :],
    }


class Adam:
    """Bias-corrected Adam with one learning rate per parameter group.

    Moment buffers are row-aligned with the model; :meth:`remap` keeps them
    aligned across densification and pruning.
    """

    def __init__(self, model: GaussianModel, config: TrainConfig):
        self.config = config
        self.step_count = 0
        views = _group_views(model)
        self.m = {k: np.zeros_like(v) for k, v in views.items()}
        self.v = {k: np.zeros_like(v) for k, v in views.items()}

    def learning_rate(self, group: str) -> float:
        lr = self.config.learning_rates[group]
        if group == "means":
            lr *= self.config.scene_extent
        return lr

    def step(self, model: GaussianModel, grads: GradientBuffer) -> GaussianModel:
        if len(grads.means) != len(model) or len(self.m["means"]) != len(model):
            raise ShapeMismatch(
                f"model has {len(model)} Gaussians, gradients {len(grads.means)}, "
                f"optimizer state {len(self.m['means'])}"
            )
        b1, b2 = self.config.adam_betas
        eps = self.config.adam_eps
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        params = _group_views(model)
        gviews = _group_views(grads)
        for name in GROUPS:
            g = gviews[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= self.learning_rate(name) * (m / c1) / (np.sqrt(v / c2) + eps)
        model.normalize_quats()
        model.clamp_scales()
        return model

    def remap(self, source: np.ndarray) -> None:
        """Reorder moments: row ``i`` takes old row ``source[i]``, or zeros when ``-1``."""
        source = np.asarray(source)
        fresh = source < 0
        safe = np.where(fresh, 0, source)
        for d in (self.m, self.v):
            for name, arr in d.items():
                new = arr[safe] if len(arr) else np.zeros((len(source),) + arr.shape[1:])
                new[fresh] = 0.0
                d[name] = new

    def reset_group(self, name: str) -> None:
        self.m[name][...] = 0.0
        self.v[name][...] = 0.0

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step_count": np.array(self.step_count)}
        for name in GROUPS:
            out[f"m_{name}"] = self.m[name]
            out[f"v_{name}"] = self.v[name]
        return out

    def load_state_dict(self, state) -> None:
        self.step_count = int(state["step_count"])
        for name in GROUPS:
            self.m[name] = np.array(state[f"m_{name}"])
            self.v[name] = np.array(state[f"v_{name}"])


def adam_step(model: GaussianModel, grads: GradientBuffer, optimizer: Adam) -> GaussianModel:
    return optimizer.step(model, grads)

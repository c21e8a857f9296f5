"""Clone / split / prune scheduling driven by accumulated screen-space gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..gaussians import GaussianModel, logit
from ..rotations import quat_to_dcm
from .backward import GradientBuffer
from .config import TrainConfig


@dataclass
class DensifyStats:
    """Running sum of per-step NDC mean-gradient norms and visibility counts."""

    grad_accum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    count: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_model(cls, model: GaussianModel) -> "DensifyStats":
        return cls(np.zeros(len(model)), np.zeros(len(model)))

    def accumulate(self, grads: GradientBuffer) -> None:
        vis = grads.visible
        self.grad_accum[vis] += grads.mean2d_norm[vis]
        self.count[vis] += 1

    def mean_grad(self) -> np.ndarray:
        return self.grad_accum / np.maximum(self.count, 1)

    def reset(self, n: int) -> None:
        self.grad_accum = np.zeros(n)
        self.count = np.zeros(n)


@dataclass
class DensifyResult:
    model: GaussianModel
    # Row i of the new model came from old row source[i]; -1 marks new Gaussians.
    source: np.ndarray
    n_cloned: int
    n_split: int
    n_pruned: int


def densify_and_prune(
    model: GaussianModel,
    stats: DensifyStats,
    config: TrainConfig,
    rng: np.random.Generator,
) -> DensifyResult:
    """Clone small / split large high-gradient Gaussians, then drop faint ones."""
    n = len(model)
    hot = stats.mean_grad() > config.densify_grad_threshold
    max_scale = model.scales.max(axis=1) if n else np.zeros(0)
    clone = hot & (max_scale < config.split_threshold)
    split = hot & (max_scale >= config.split_threshold)

    parts = [model.take(np.nonzero(~split)[0])]
    source = [np.nonzero(~split)[0]]

    ci = np.nonzero(clone)[0]
    if len(ci):
        parts.append(model.take(ci))
        source.append(np.full(len(ci), -1))

    si = np.nonzero(split)[0]
    if len(si):
        children = model.take(np.repeat(si, 2))
        s = np.exp(children.log_scales)
        R = quat_to_dcm(children.quats)
        offsets = np.einsum("nij,nj->ni", R, rng.normal(size=s.shape) * s)
        children.means = children.means + offsets
        children.log_scales = np.log(s / config.split_factor)
        parts.append(children)
        source.append(np.full(len(children), -1))

    grown = GaussianModel.concatenate(parts)
    grown.active_sh_degree = model.active_sh_degree
    src = np.concatenate(source)

    keep = grown.opacities >= config.prune_opacity_threshold
    out = grown.take(np.nonzero(keep)[0])
    out.active_sh_degree = model.active_sh_degree
    stats.reset(len(out))
    return DensifyResult(out, src[keep], len(ci), len(si), int((~keep).sum()))


def reset_opacity(model: GaussianModel, ceiling: float = 0.01) -> None:
    model.opacity_logits = np.minimum(model.opacity_logits, float(logit(ceiling)))

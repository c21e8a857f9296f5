"""Sequential per-frame training: a few steps on each frame, then discard it."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..camera import CameraView
from ..errors import EmptyStream, TrainingDiverged
from ..gaussians import GaussianModel, save_ply
from ..metrics import MetricsRecord, model_chamfer
from .backward import backward
from .config import TrainConfig
from .densify import DensifyStats, densify_and_prune, reset_opacity
from .optim import Adam


@dataclass
class TrainState:
    model: GaussianModel
    optimizer: Adam
    stats: DensifyStats
    iteration: int = 0


def save_checkpoint(state: TrainState, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = d / f"iter_{state.iteration:06d}"
    save_ply(state.model, stem.with_suffix(".ply"))
    np.savez(stem.with_suffix(".npz"), **state.optimizer.state_dict())
    return stem


def train_sequential(
    model: GaussianModel,
    stream: Iterable[tuple[np.ndarray, CameraView]],
    config: TrainConfig,
    rng: np.random.Generator | None = None,
    truth_cloud=None,
    checkpoint_dir=None,
    on_record: Callable[[MetricsRecord], None] | None = None,
) -> tuple[GaussianModel, list[MetricsRecord]]:
    """Train ``model`` on frames as they arrive.

    Each frame gets ``config.steps_per_image`` optimizer steps, capped overall at
    ``config.total_iterations``. One :class:`MetricsRecord` is logged per iteration;
    the chamfer column is filled every ``chamfer_interval`` iterations and on the
    last one when ``truth_cloud`` is given, and is NaN otherwise.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    model = model.copy()
    state = TrainState(model, Adam(model, config), DensifyStats.for_model(model))
    log: list[MetricsRecord] = []
    t0 = time.perf_counter()
    seen = 0
    last_record = None

    for image, cam in stream:
        seen += 1
        for _ in range(config.steps_per_image):
            if state.iteration >= config.total_iterations:
                break
            state.iteration += 1
            it = state.iteration
            state.model.active_sh_degree = config.sh_degree_at(it)
            res = backward(state.model, cam, image, config.beta)
            if not math.isfinite(res.loss):
                raise TrainingDiverged(f"loss is {res.loss} at iteration {it}", log=log, model=state.model)
            state.stats.accumulate(res.grads)
            state.optimizer.step(state.model, res.grads)

            if config.is_densify_iteration(it):
                out = densify_and_prune(state.model, state.stats, config, rng)
                state.model = out.model
                state.optimizer.remap(out.source)
            if config.opacity_reset_interval and it % config.opacity_reset_interval == 0:
                reset_opacity(state.model)
                state.optimizer.reset_group("opacity_logits")

            cd = float("nan")
            if truth_cloud is not None and config.chamfer_interval and it % config.chamfer_interval == 0:
                cd = _safe_chamfer(state.model, truth_cloud)
            c = res.components
            rec = MetricsRecord(it, time.perf_counter() - t0, res.loss, c["l1"], c["ssim"], c["psnr"], cd)
            log.append(rec)
            last_record = rec
            if on_record is not None:
                on_record(rec)
            if checkpoint_dir is not None and config.checkpoint_interval and it % config.checkpoint_interval == 0:
                save_checkpoint(state, checkpoint_dir)
        if state.iteration >= config.total_iterations:
            break

    if seen == 0:
        raise EmptyStream("training stream yielded no frames")
    if truth_cloud is not None and last_record is not None and math.isnan(last_record.chamfer):
        last_record.chamfer = _safe_chamfer(state.model, truth_cloud)
    return state.model, log


def _safe_chamfer(model, cloud) -> float:
    try:
        return model_chamfer(model, cloud)
    except ValueError:
        return float("nan")

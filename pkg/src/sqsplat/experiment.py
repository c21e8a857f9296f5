"""Run descriptions and the glue that turns one into a trained model plus logs."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import AlignOptions, implicit_pose_stream
from .camera import CameraView
from .errors import MissingAssembly, TrainingDiverged
from .gaussians import GaussianModel, save_ply
from .metrics import (
    ThresholdTracker,
    l1_image,
    model_chamfer,
    psnr,
    read_metrics_csv,
    ssim,
    write_metrics_csv,
)
from .pointcloud import PointCloud
from .render import render
from .superquadric import PrimitiveAssembly
from .synth import EstimatorSim, SyntheticScene, load_dataset, perturb_assembly, simulate_estimate, substream
from .train import TrainConfig, initialize, train_sequential

POSE_SOURCES = ("truth", "estimator", "implicit")
ASSEMBLY_KEYWORDS = ("truth", "estimate")


@dataclass
class RunSpec:
    """Everything needed to re-execute a training run."""

    dataset: str
    out: str
    init: str = "primitives"
    # "truth" (perturbed by shape_perturb), "estimate" (estimator output at frame 0) or a JSON path.
    assembly: str | None = "truth"
    pose_source: str = "truth"
    estimator: dict = field(default_factory=dict)
    shape_perturb: float = 0.1
    preset: str = "rt-poses"
    overrides: dict = field(default_factory=dict)
    seed: int = 0
    points_per_primitive: int = 1000

    def __post_init__(self):
        if self.init not in ("random", "primitives"):
            raise ValueError(f"unknown init style {self.init!r}")
        if self.pose_source not in POSE_SOURCES:
            raise ValueError(f"unknown pose source {self.pose_source!r}; choose from {POSE_SOURCES}")
        if self.init == "primitives" and not self.assembly:
            raise MissingAssembly("primitive initialization needs an assembly source")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def estimator_for(spec: RunSpec) -> EstimatorSim:
    opts = dict(spec.estimator)
    variant = opts.pop("variant", "ambiguity-free")
    split = opts.pop("split", "train")
    opts.setdefault("shape_perturb", spec.shape_perturb)
    sim = EstimatorSim.from_table(variant, split)
    return dataclasses.replace(sim, **opts)


def resolve_config(spec: RunSpec, scene: SyntheticScene) -> TrainConfig:
    """Preset, then overrides; the iteration budget and extent default to the dataset's."""
    overrides = dict(spec.overrides)
    overrides.setdefault("scene_extent", scene.extent)
    base = TrainConfig.preset(spec.preset, **{k: v for k, v in overrides.items() if k != "learning_rates"})
    if "learning_rates" in overrides:
        base = base.updated(learning_rates=overrides["learning_rates"])
    if "total_iterations" not in overrides:
        base = base.updated(total_iterations=base.steps_per_image * len(scene))
    return base


@dataclass
class ResolvedRun:
    views: list  # poses the optimizer sees
    assembly: PrimitiveAssembly | None
    # Truth cloud and views expressed in the frame the model is trained in.
    eval_cloud: PointCloud
    eval_views: list


def resolve_inputs(spec: RunSpec, scene: SyntheticScene, threads: int = 1) -> ResolvedRun:
    seed = spec.seed
    est_seed = int(substream(seed, "estimator").integers(2**31))
    sim = estimator_for(spec)
    estimates = None
    if spec.pose_source != "truth" or spec.assembly == "estimate":
        estimates = [simulate_estimate(scene, i, sim, est_seed) for i in range(len(scene))]

    views = list(scene.views)
    eval_cloud = scene.truth_cloud
    eval_views = list(scene.views)
    frame_R = np.eye(3)
    if spec.pose_source == "estimator":
        views = [v.with_pose(e.rotation, e.translation) for v, e in zip(scene.views, estimates)]
    elif spec.pose_source == "implicit":
        # Shapes come in a frame parallel to each camera; rotation is recovered
        # by aligning every frame's shape with the first one.
        cam_assemblies = [e.assembly.transformed(e.rotation) for e in estimates]
        poses = implicit_pose_stream(
            cam_assemblies, [e.translation for e in estimates], opts=AlignOptions(workers=threads)
        )
        views = [v.with_pose(R, t) for v, (R, t) in zip(scene.views, poses)]
        frame_R = scene.views[0].R
        eval_cloud = PointCloud(scene.truth_cloud.points @ frame_R.T)
        eval_views = [v.with_pose(v.R @ frame_R.T, v.t) for v in scene.views]

    assembly = None
    if spec.init == "primitives":
        if spec.assembly == "truth":
            rng = substream(seed, "shape-noise")
            assembly = perturb_assembly(scene.truth_assembly, spec.shape_perturb, rng).transformed(frame_R)
        elif spec.assembly == "estimate":
            a0 = estimates[0].assembly
            assembly = a0.transformed(estimates[0].rotation) if spec.pose_source == "implicit" else a0
        else:
            assembly = PrimitiveAssembly.load(spec.assembly)
    return ResolvedRun(views, assembly, eval_cloud, eval_views)


def evaluate_model(model: GaussianModel, frames, views, cloud) -> dict:
    """Mean image metrics over all views plus the chamfer distance to ``cloud``."""
    l1s, ss, ps = [], [], []
    for img, cam in zip(frames, views):
        r = render(model, cam)
        t = np.asarray(img, dtype=np.float64)
        l1s.append(l1_image(r, t))
        ss.append(ssim(r, t))
        ps.append(psnr(r, t))
    try:
        cd = model_chamfer(model, cloud)
    except ValueError:
        cd = float("nan")
    return {"l1": float(np.mean(l1s)), "ssim": float(np.mean(ss)), "psnr": float(np.mean(ps)), "chamfer": cd, "n_gaussians": len(model)}


def run_training(spec: RunSpec, scene: SyntheticScene | None = None, threads: int = 1) -> dict:
    """Execute ``spec``; writes model, logs, tracker and the resolved spec to ``spec.out``.

    Raises :class:`TrainingDiverged` after writing whatever was logged.
    """
    scene = scene if scene is not None else load_dataset(spec.dataset)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    config = resolve_config(spec, scene)
    run = resolve_inputs(spec, scene, threads)
    init_seed = int(substream(spec.seed, "init").integers(2**31))
    model0 = initialize(
        spec.init, init_seed, config.scene_extent, run.assembly, points_per_primitive=spec.points_per_primitive
    )
    stream = ((np.asarray(f, dtype=np.float64), v) for f, v in zip(scene.frames, run.views))
    spec.save(out / "runspec.json")
    config.save(out / "config.json")
    try:
        model, log = train_sequential(
            model0, stream, config, substream(spec.seed, "optimizer"), run.eval_cloud,
            checkpoint_dir=out / "checkpoints",
        )
    except TrainingDiverged as exc:
        write_metrics_csv(exc.log, out / "metrics.csv")
        raise
    write_metrics_csv(log, out / "metrics.csv")
    tracker = ThresholdTracker()
    for rec in log:
        tracker.update(rec)
    tracker.save(out / "tracker.json")
    save_ply(model, out / "final.ply")
    summary = evaluate_model(model, scene.frames, run.eval_views, run.eval_cloud)
    summary["iterations"] = len(log)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"model": model, "log": log, "tracker": tracker, "summary": summary, "config": config}


# -- comparison --------------------------------------------------------------

class IncompleteRun(Exception):
    pass


def load_run(directory) -> dict:
    d = Path(directory)
    needed = ("metrics.csv", "tracker.json")
    missing = [n for n in needed if not (d / n).is_file()]
    if missing:
        raise IncompleteRun(f"{d}: missing {', '.join(missing)}")
    log = read_metrics_csv(d / "metrics.csv")
    if not log:
        raise IncompleteRun(f"{d}: empty metrics log")
    tracker = json.loads((d / "tracker.json").read_text())
    return {"log": log, "tracker": tracker}


def _ratio(a, b) -> float:
    if a is None or b is None or b == 0:
        return float("nan")
    return a / b


def compare_runs(dir_a, dir_b) -> dict:
    """Final metrics and time-to-threshold of two runs, with ``a / b`` iteration ratios."""
    runs = {"a": load_run(dir_a), "b": load_run(dir_b)}
    report = {"runs": {}, "ratios": {}}
    for key, r in runs.items():
        last = r["log"][-1]
        hits = r["tracker"]["hits"]
        report["runs"][key] = {
            "path": str(dir_a if key == "a" else dir_b),
            "final": {"loss": last.loss, "l1": last.l1, "ssim": last.ssim, "psnr": last.psnr, "chamfer": last.chamfer},
            "iterations": last.iteration,
            "best": r["tracker"]["best"],
            "hits": hits,
        }
    for m in ("2.0", "1.5", "1.1"):
        ha = report["runs"]["a"]["hits"].get(m)
        hb = report["runs"]["b"]["hits"].get(m)
        report["ratios"][m] = _ratio(ha and ha["iter"], hb and hb["iter"])
    return report


def format_report(report: dict) -> str:
    rows = ["metric            run a          run b"]
    fa, fb = report["runs"]["a"]["final"], report["runs"]["b"]["final"]
    for k in ("loss", "l1", "ssim", "psnr", "chamfer"):
        rows.append(f"{k:<12} {fa[k]:>12.6g} {fb[k]:>14.6g}")
    for m, ratio in report["ratios"].items():
        ha = report["runs"]["a"]["hits"].get(m) or {}
        hb = report["runs"]["b"]["hits"].get(m) or {}
        rows.append(
            f"iters to {m}x {ha.get('iter', '-')!s:>10} {hb.get('iter', '-')!s:>14}   ratio {ratio:.3f}"
            + ("" if not math.isnan(ratio) else " (n/a)")
        )
        rows.append(f"time to {m}x  {ha.get('time_s', float('nan')):>10.2f}s {hb.get('time_s', float('nan')):>13.2f}s")
    return "\n".join(rows)

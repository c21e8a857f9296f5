"""Command line entry point: ``sqsplat {synth,train,align,eval,compare}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import experiment
from .align import AlignOptions, align_multistart
from .errors import IoFailure, MissingAssembly, TrainingDiverged
from .gaussians import load_ply as load_gaussians
from .pointcloud import load_ply as load_cloud
from .synth import MAX_PRIMITIVES, export_dataset, generate_scene, load_dataset
from .train import PRESETS, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_INCOMPLETE = 5


class UsageError(Exception):
    pass


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def _global_flags(suppress: bool = False) -> argparse.ArgumentParser:
    """Flags accepted before or after the subcommand name.

    The subcommand copies use suppressed defaults so they do not clobber a
    value given before the subcommand.
    """
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out", default=d(None), help="output directory (or file for align/eval/compare)")
    p.add_argument("--config", default=d(None), help="JSON file of TrainConfig fields")
    # Worker threads for the independent alignment starts.
    p.add_argument("--threads", type=_positive(int), default=d(1))
    return p


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    """One ``--field`` flag per scalar TrainConfig field, plus ``--lr-<group>``."""
    g = p.add_argument_group("training config")
    defaults = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        value = getattr(defaults, f.name)
        flag = "--" + f.name.replace("_", "-")
        if f.name == "learning_rates":
            for group in value:
                g.add_argument(f"--lr-{group.replace('_', '-')}", type=float, default=None, dest=f"lr__{group}")
        elif f.name == "adam_betas":
            g.add_argument(flag, type=float, nargs=2, default=None, dest=f"cfg__{f.name}")
        elif f.name == "split_scale_threshold":
            g.add_argument(flag, type=float, default=None, dest=f"cfg__{f.name}")
        else:
            g.add_argument(flag, type=type(value), default=None, dest=f"cfg__{f.name}")


def _config_overrides(args) -> dict:
    """Config file values, then explicit flags on top."""
    overrides: dict = {}
    if args.config:
        try:
            overrides.update(json.loads(Path(args.config).read_text()))
        except OSError as exc:
            raise IoFailure(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
    lrs = dict(overrides.get("learning_rates", {}))
    for key, value in vars(args).items():
        if value is None:
            continue
        if key.startswith("cfg__"):
            overrides[key[5:]] = list(value) if isinstance(value, list) else value
        elif key.startswith("lr__"):
            lrs[key[4:]] = value
    if lrs:
        overrides["learning_rates"] = lrs
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqsplat", parents=[_global_flags()], description=__doc__)
    common = _global_flags(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--primitives", type=int, default=3)
    p.add_argument("--views", type=int, default=60)
    p.add_argument("--res", type=int, default=64)

    p = sub.add_parser("train", parents=[common], help="train a Gaussian model on a dataset")
    p.add_argument("--dataset", default=None)
    p.add_argument("--runspec", default=None, help="re-execute a saved RunSpec JSON")
    p.add_argument("--init", choices=("random", "primitives"), default="primitives")
    p.add_argument("--assembly", default=None, help="'truth', 'estimate' or an assembly JSON path")
    p.add_argument("--poses", choices=experiment.POSE_SOURCES, default="truth")
    p.add_argument("--estimator", default=None, help="JSON object of estimator settings (variant, split, ...)")
    p.add_argument("--shape-perturb", type=float, default=0.1)
    p.add_argument("--points-per-primitive", type=_positive(int), default=1000)
    p.add_argument("--preset", choices=sorted(PRESETS), default="rt-poses")
    _add_config_flags(p)

    p = sub.add_parser("align", parents=[common], help="recover the rotation between two PLY clouds")
    p.add_argument("cloud_a")
    p.add_argument("cloud_b")
    p.add_argument("--starts", type=_positive(int), default=16)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model PLY against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)

    p = sub.add_parser("compare", parents=[common], help="compare two finished runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    return parser


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.views < 1:
        raise UsageError("--views must be >= 1")
    if not 1 <= args.primitives <= MAX_PRIMITIVES:
        raise UsageError(f"--primitives must lie in [1, {MAX_PRIMITIVES}]")
    if args.res < 8:
        raise UsageError("--res must be >= 8")
    out = Path(args.out or "dataset")
    scene = generate_scene(args.seed, args.primitives, args.views, args.res)
    manifest = export_dataset(scene, out)
    print(f"wrote {len(scene)} frames to {out} ({len(manifest['files'])} files)")
    return EXIT_OK


def _runspec_from_args(args) -> experiment.RunSpec:
    if args.runspec:
        try:
            spec = experiment.RunSpec.load(args.runspec)
        except OSError as exc:
            raise IoFailure(f"cannot read runspec {args.runspec}: {exc}") from exc
        if args.out:
            spec = dataclasses.replace(spec, out=args.out)
        return spec
    if not args.dataset:
        raise UsageError("train needs --dataset or --runspec")
    try:
        estimator = json.loads(args.estimator) if args.estimator else {}
    except json.JSONDecodeError as exc:
        raise UsageError(f"--estimator is not valid JSON: {exc}") from exc
    assembly = args.assembly
    if assembly not in (None, *experiment.ASSEMBLY_KEYWORDS) and not Path(assembly).is_file():
        raise UsageError(f"assembly file {assembly} does not exist")
    return experiment.RunSpec(
        dataset=args.dataset,
        out=args.out or "run",
        init=args.init,
        assembly=assembly,
        pose_source=args.poses,
        estimator=estimator,
        shape_perturb=args.shape_perturb,
        preset=args.preset,
        overrides=_config_overrides(args),
        seed=args.seed,
        points_per_primitive=args.points_per_primitive,
    )


def cmd_train(args) -> int:
    try:
        spec = _runspec_from_args(args)
    except (MissingAssembly, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    scene = load_dataset(spec.dataset)
    try:
        result = experiment.run_training(spec, scene, threads=args.threads)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    s = result["summary"]
    print(
        f"{s['iterations']} iterations: L1 {s['l1']:.5f}  SSIM {s['ssim']:.4f}  "
        f"PSNR {s['psnr']:.2f}  CD {s['chamfer']:.5f}  -> {spec.out}"
    )
    return EXIT_OK


def _emit(obj: dict, out) -> None:
    text = json.dumps(obj, indent=2)
    print(text)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def cmd_align(args) -> int:
    try:
        a = load_cloud(args.cloud_a)
        b = load_cloud(args.cloud_b)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read clouds: {exc}") from exc
    res = align_multistart(a, b, args.starts, AlignOptions(workers=args.threads))
    _emit(res.to_dict(), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    scene = load_dataset(args.dataset)
    try:
        model = load_gaussians(args.model)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read model {args.model}: {exc}") from exc
    _emit(experiment.evaluate_model(model, scene.frames, scene.views, scene.truth_cloud), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        report = experiment.compare_runs(args.run_a, args.run_b)
    except (experiment.IncompleteRun, ValueError, KeyError) as exc:
        print(f"incomplete run: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    print(experiment.format_report(report))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "align": cmd_align, "eval": cmd_eval, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sqsplat {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoFailure, OSError) as exc:
        print(f"sqsplat {args.command}: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

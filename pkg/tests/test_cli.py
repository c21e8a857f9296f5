import json

import numpy as np
import pytest

from sqsplat import cli, experiment
from sqsplat.errors import MissingAssembly
from sqsplat.pointcloud import save_ply as save_cloud
from sqsplat.align import apply_rotation
from sqsplat.rotations import geodesic_angle, random_rotation
from sqsplat.superquadric import assembly_to_pointcloud

from conftest import tripod_assembly


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data") / "ds"
    assert cli.main(["synth", "--seed", "7", "--primitives", "2", "--views", "6", "--res", "24", "--out", str(d)]) == 0
    return d


def train(dataset, out, *extra):
    return cli.main(["train", "--dataset", str(dataset), "--out", str(out), "--assembly", "truth",
                     "--points-per-primitive", "150", *extra])


def test_synth_layout(dataset):
    frames = sorted(p.name for p in (dataset / "frames").glob("*.f32"))
    assert frames == [f"{i:04d}.f32" for i in range(6)]
    for name in ("poses.json", "camera.json", "manifest.json", "truth/cloud.ply", "truth/assembly.json"):
        assert (dataset / name).is_file()


def test_synth_repeatable(dataset, tmp_path):
    d2 = tmp_path / "again"
    assert cli.main(["synth", "--seed", "7", "--primitives", "2", "--views", "6", "--res", "24", "--out", str(d2)]) == 0
    assert (d2 / "manifest.json").read_text() == (dataset / "manifest.json").read_text()


@pytest.mark.parametrize("flags", [["--views", "0"], ["--primitives", "9"], ["--res", "2"], ["--threads", "0"]])
def test_synth_bad_flags(tmp_path, flags, capsys):
    code = None
    try:
        code = cli.main(["synth", "--out", str(tmp_path / "x"), *flags])
    except SystemExit as exc:  # argparse type errors
        code = exc.code
    assert code == 2


def test_synth_io_failure(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert cli.main(["synth", "--views", "1", "--res", "8", "--out", str(blocker / "ds")]) == 3


def test_global_flags_either_side(tmp_path):
    p = cli.build_parser()
    a = p.parse_args(["--seed", "5", "synth"])
    b = p.parse_args(["synth", "--seed", "5"])
    assert a.seed == b.seed == 5


def test_train_writes_outputs(dataset, tmp_path):
    out = tmp_path / "run"
    assert train(dataset, out) == 0
    for name in ("final.ply", "metrics.csv", "tracker.json", "runspec.json", "config.json", "summary.json"):
        assert (out / name).is_file()
    lines = (out / "metrics.csv").read_text().splitlines()
    assert len(lines) == 1 + 5 * 6
    spec = experiment.RunSpec.load(out / "runspec.json")
    assert spec.dataset == str(dataset) and spec.assembly == "truth"


def test_train_without_assembly_is_usage_error(dataset, tmp_path):
    assert cli.main(["train", "--dataset", str(dataset), "--out", str(tmp_path / "r"), "--init", "primitives"]) == 2
    assert train(dataset, tmp_path / "r2", "--assembly", str(tmp_path / "missing.json")) == 2
    with pytest.raises(MissingAssembly):
        experiment.RunSpec(dataset="d", out="o", init="primitives", assembly=None)


def test_train_missing_dataset(tmp_path):
    assert train(tmp_path / "nowhere", tmp_path / "r") == 3


def test_truth_vs_noiseless_estimator_identical_logs(dataset, tmp_path):
    noiseless = json.dumps({"rot_error_deg": [0, 0], "trans_error": [0, 0], "shape_perturb": 0.0})
    assert train(dataset, tmp_path / "a", "--total-iterations", "10") == 0
    assert train(dataset, tmp_path / "b", "--total-iterations", "10", "--poses", "estimator", "--estimator", noiseless) == 0
    strip = lambda p: [row.split(",")[:1] + row.split(",")[2:] for row in (p / "metrics.csv").read_text().splitlines()]
    assert strip(tmp_path / "a") == strip(tmp_path / "b")


def test_train_implicit_and_random(dataset, tmp_path):
    assert train(dataset, tmp_path / "imp", "--poses", "implicit", "--assembly", "estimate", "--total-iterations", "5",
                 "--estimator", json.dumps({"variant": "ambiguity-free"})) == 0
    assert cli.main(["train", "--dataset", str(dataset), "--out", str(tmp_path / "rnd"), "--init", "random",
                     "--total-iterations", "5"]) == 0


def test_divergence_exit_code(dataset, tmp_path):
    import shutil

    bad = tmp_path / "bad"
    shutil.copytree(dataset, bad)
    raw = np.full((24, 24, 3), np.nan, dtype="<f4")
    (bad / "frames" / "0001.f32").write_bytes(raw.tobytes())
    out = tmp_path / "div"
    assert train(bad, out) == 4
    assert len((out / "metrics.csv").read_text().splitlines()) == 1 + 5


def test_runspec_reexecution(dataset, tmp_path):
    assert train(dataset, tmp_path / "a", "--total-iterations", "8", "--seed", "3") == 0
    assert cli.main(["train", "--runspec", str(tmp_path / "a" / "runspec.json"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "final.ply").read_bytes() == (tmp_path / "b" / "final.ply").read_bytes()


def test_config_precedence(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sh_increase_interval": 700, "densify_interval": 50}))
    p = cli.build_parser()
    args = p.parse_args(["train", "--dataset", str(dataset), "--assembly", "truth", "--preset", "est-poses", "--config", str(cfg),
                         "--sh-increase-interval", "800", "--lr-sh-dc", "0.01"])
    spec = cli._runspec_from_args(args)
    c = experiment.resolve_config(spec, experiment.load_dataset(dataset))
    assert c.sh_increase_interval == 800  # flag beats file
    assert c.densify_interval == 50  # file beats preset default
    assert c.densify_start_iter == 100  # preset beats defaults
    assert c.learning_rates["sh_dc"] == 0.01
    assert c.total_iterations == 5 * 6


def test_full_rt_poses_run_logs_1500(tmp_path):
    d = tmp_path / "ds300"
    assert cli.main(["synth", "--primitives", "1", "--views", "300", "--res", "8", "--out", str(d)]) == 0
    out = tmp_path / "r"
    assert cli.main(["train", "--dataset", str(d), "--out", str(out), "--assembly", "truth",
                     "--points-per-primitive", "50", "--preset", "rt-poses"]) == 0
    assert len((out / "metrics.csv").read_text().splitlines()) == 1 + 1500


def test_compare(dataset, tmp_path, capsys):
    assert train(dataset, tmp_path / "a", "--total-iterations", "10") == 0
    out = tmp_path / "cmp.json"
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "a"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["ratios"] == {"2.0": 1.0, "1.5": 1.0, "1.1": 1.0}
    text = capsys.readouterr().out
    assert "iters to 1.5x" in text and "chamfer" in text
    (tmp_path / "a" / "tracker.json").unlink()
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "a")]) == 5


def test_align_subcommand(tmp_path, capsys):
    cloud = assembly_to_pointcloud(tripod_assembly(), 100)
    Q = random_rotation(np.random.default_rng(0))
    save_cloud(cloud, tmp_path / "a.ply")
    save_cloud(apply_rotation(cloud, Q), tmp_path / "b.ply")
    assert cli.main(["align", str(tmp_path / "a.ply"), str(tmp_path / "a.ply"), "--out", str(tmp_path / "same.json")]) == 0
    assert json.loads((tmp_path / "same.json").read_text())["chamfer"] < 1e-9
    assert cli.main(["align", str(tmp_path / "a.ply"), str(tmp_path / "b.ply"), "--out", str(tmp_path / "r.json")]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert set(doc) >= {"rotation", "chamfer", "start"}
    assert geodesic_angle(np.array(doc["rotation"]).T, Q) < 5.0
    assert cli.main(["align", str(tmp_path / "a.ply"), str(tmp_path / "b.ply"), "--starts", "1", "--out", str(tmp_path / "r1.json")]) == 0
    assert json.loads((tmp_path / "r1.json").read_text())["chamfer"] >= doc["chamfer"]
    assert cli.main(["align", str(tmp_path / "nope.ply"), str(tmp_path / "b.ply")]) == 3


def test_eval_subcommand(dataset, tmp_path):
    out = tmp_path / "e.json"
    assert cli.main(["eval", "--dataset", str(dataset), "--model", str(dataset / "truth" / "model.ply"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["l1"] < 1e-6 and doc["ssim"] > 0.999999
    assert cli.main(["eval", "--dataset", str(dataset), "--model", str(tmp_path / "missing.ply")]) == 3


def test_writes_stay_inside_out(dataset, tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    assert train(dataset, work / "only", "--total-iterations", "5") == 0
    assert sorted(p.name for p in work.iterdir()) == ["only"]

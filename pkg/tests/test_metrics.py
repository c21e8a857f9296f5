import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sqsplat.errors import DimensionMismatch, EmptyCloud, OutOfOrderRecord
from sqsplat.gaussians import from_pointcloud
from sqsplat.metrics import (
    SSIM_C1,
    MetricsRecord,
    ThresholdTracker,
    chamfer,
    chamfer_bruteforce,
    combined_loss,
    combined_loss_grad,
    l1_image,
    loss_from_components,
    model_chamfer,
    psnr,
    psnr_from_mse,
    read_metrics_csv,
    ssim,
    tracker_update,
    write_metrics_csv,
)
from sqsplat.pointcloud import PointCloud

images = arrays(np.float64, (6, 7, 3), elements=st.floats(0, 1))


def test_l1_examples():
    a = np.random.default_rng(0).random((8, 8, 3))
    assert l1_image(a, a) == 0.0
    assert l1_image(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 1.0
    b = a.copy()
    b.reshape(-1)[::2] += 0.5
    assert l1_image(b, a) == pytest.approx(0.25, abs=1e-15)


def test_dimension_mismatch():
    for f in (l1_image, ssim, psnr, combined_loss):
        with pytest.raises(DimensionMismatch):
            f(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_ssim_examples():
    a = np.random.default_rng(1).random((16, 16, 3))
    assert ssim(a, a) == 1.0
    assert ssim(np.zeros((8, 8, 3)), np.ones((8, 8, 3))) == pytest.approx(SSIM_C1 / (1 + SSIM_C1), rel=1e-12)
    shifted = np.clip(a * 0.8, 0, 1) + 0.1
    base = np.clip(a * 0.8, 0, 1)
    x, y = base.mean(-1), shifted.mean(-1)
    lum = (2 * x.mean() * y.mean() + SSIM_C1) / (x.mean() ** 2 + y.mean() ** 2 + SSIM_C1)
    assert lum < 1
    assert ssim(base, shifted) == pytest.approx(lum, rel=1e-12)  # structure term is exactly 1


@settings(max_examples=100, deadline=None)
@given(images, images)
def test_ssim_range(a, b):
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert ssim(a, a) == 1.0


def test_windowed_ssim_option():
    a = np.random.default_rng(2).random((32, 32, 3))
    assert ssim(a, a, window=11) == pytest.approx(1.0)
    assert ssim(a, a[::-1], window=11) < 0.5


def test_psnr_examples():
    assert psnr_from_mse(0.01) == pytest.approx(20.0, abs=1e-9)
    assert psnr_from_mse(1.0) == 0.0
    a = np.full((4, 4, 3), 0.3)
    assert psnr(a, a) == 100.0
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-9, 1.0), st.floats(1.0001, 10.0))
def test_psnr_strictly_decreasing(m, factor):
    if m * factor > 1e6:
        return
    assert psnr_from_mse(m * factor) < psnr_from_mse(m)


def test_chamfer_examples():
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == pytest.approx(2.0, abs=1e-12)
    a = np.random.default_rng(3).random((50, 3))
    assert chamfer(a, a) == 0.0
    with pytest.raises(EmptyCloud):
        chamfer(np.zeros((0, 3)), a)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(0, 2**31))
def test_chamfer_properties(n, m, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    assert chamfer(A, B) == pytest.approx(chamfer(B, A), rel=1e-12, abs=1e-15)
    v = rng.normal(size=3) * 5
    assert chamfer(A + v, B + v) == pytest.approx(chamfer(A, B), abs=1e-9)
    assert chamfer(A, B) >= 0


def test_chamfer_index_matches_bruteforce():
    rng = np.random.default_rng(4)
    A, B = rng.normal(size=(2000, 3)), rng.normal(size=(1500, 3))
    assert abs(chamfer(A, B) - chamfer_bruteforce(A, B)) < 1e-12


def test_model_chamfer_examples():
    truth = PointCloud(np.random.default_rng(5).random((100, 3)))
    assert model_chamfer(from_pointcloud(truth, 0.5), truth) == 0.0
    with pytest.raises(EmptyCloud):
        model_chamfer(from_pointcloud(truth, 0.01), truth)
    one = from_pointcloud(PointCloud([[0.3, 0.4, 0.0]]), 0.9)
    assert model_chamfer(one, PointCloud([[0.0, 0.0, 0.0]])) == pytest.approx(2 * 0.25, abs=1e-15)


def test_combined_loss_examples():
    assert loss_from_components(0.1, 0.9, 0.2) == pytest.approx(0.1, abs=1e-12)
    a = np.random.default_rng(6).random((8, 8, 3))
    assert combined_loss(a, a)[0] == 0.0
    b = np.random.default_rng(7).random((8, 8, 3))
    assert combined_loss(a, b, 0.0)[0] == pytest.approx(l1_image(a, b), abs=1e-15)
    assert combined_loss(a, b, 1.0)[0] == pytest.approx(1 - ssim(a, b), abs=1e-15)
    with pytest.raises(ValueError):
        combined_loss(a, b, 1.5)


def test_combined_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(8)
    r, t = rng.random((5, 6, 3)), rng.random((5, 6, 3))
    loss, _, g = combined_loss_grad(r, t, 0.2)
    assert loss == pytest.approx(combined_loss(r, t, 0.2)[0], abs=1e-15)
    h = 1e-7
    for idx in [(0, 0, 0), (2, 3, 1), (4, 5, 2), (1, 1, 1)]:
        rp, rm = r.copy(), r.copy()
        rp[idx] += h
        rm[idx] -= h
        fd = (combined_loss(rp, t, 0.2)[0] - combined_loss(rm, t, 0.2)[0]) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_l1_subgradient_zero_at_equality():
    a = np.random.default_rng(9).random((4, 4, 3))
    _, _, g = combined_loss_grad(a, a, 0.0)
    assert not g.any()


def _log(values):
    return [MetricsRecord(i + 1, 0.1 * (i + 1), v, v, 0.5, 20.0) for i, v in enumerate(values)]


def test_tracker_monotone_log():
    values = np.linspace(1.0, 0.1, 100)
    t = ThresholdTracker(multipliers=(2.0,))
    for rec in _log(values):
        tracker_update(t, rec)
    hits = t.finalize()
    first = int(np.argmax(values <= 2.0 * values.min())) + 1
    assert hits[2.0][0] == first
    assert t.best_metric == pytest.approx(0.1)


def test_tracker_constant_log():
    t = ThresholdTracker()
    for rec in _log([0.3] * 10):
        t.update(rec)
    assert all(it == 1 for it, _ in t.finalize().values())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=60))
def test_tracker_threshold_order(values):
    t = ThresholdTracker()
    for rec in _log(values):
        t.update(rec)
    hits = t.finalize()
    assert hits[2.0][0] <= hits[1.5][0] <= hits[1.1][0]


def test_tracker_out_of_order():
    t = ThresholdTracker()
    t.update(MetricsRecord(5, 0, 1, 1, 0, 0))
    with pytest.raises(OutOfOrderRecord):
        t.update(MetricsRecord(4, 0, 1, 1, 0, 0))


def test_tracker_json(tmp_path):
    t = ThresholdTracker()
    for rec in _log([1.0, 0.5, 0.2, 0.1]):
        t.update(rec)
    t.save(tmp_path / "t.json")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["best"] == 0.1
    assert doc["hits"]["2.0"] == {"iter": 3, "time_s": pytest.approx(0.3)}
    assert set(doc["hits"]) == {"2.0", "1.5", "1.1"}


def test_metrics_csv_roundtrip(tmp_path):
    recs = _log([1 / 3, 0.25])
    recs[0].chamfer = 0.123456789123
    write_metrics_csv(recs, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "iteration,wall_time_s,loss,l1,ssim,psnr,chamfer"
    assert lines[1].split(",")[2] == "0.333333333"
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back[0].iteration == 1 and back[0].chamfer == 0.123456789
    assert math.isnan(back[1].chamfer)

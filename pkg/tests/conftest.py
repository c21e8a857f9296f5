import numpy as np
import pytest

from sqsplat.camera import CameraView
from sqsplat.gaussians import GaussianModel
from sqsplat.superquadric import PrimitiveAssembly, SuperquadricParams


def random_model(rng, n=6, degree=3, spread=0.5):
    """Small random Gaussian set in front of :func:`small_camera`."""
    means = rng.uniform(-spread, spread, (n, 3))
    log_scales = np.log(rng.uniform(0.05, 0.25, (n, 3)))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    logits = rng.uniform(-2.0, 2.0, n)
    sh = rng.normal(scale=0.1, size=(n, 16, 3))
    return GaussianModel(means, log_scales, q, logits, sh, degree)


def small_camera(res=32, f=40.0, eye=(0.3, -0.2, -3.0)):
    c = (res - 1) / 2.0
    return CameraView.look_at(eye, [0, 0, 0], [0, -1, 0], f, f, c, c, res, res)


def axis_camera(res=128, f=100.0, cx=64.0, cy=64.0):
    """Identity pose: world frame equals camera frame."""
    return CameraView(f, f, cx, cy, res, res, np.eye(3), np.zeros(3))


def tripod_assembly():
    """Three arms of distinct lengths from a corner: no rotational symmetry."""
    sq = lambda a, t: SuperquadricParams(np.array(a), np.array([0.5, 0.5]), np.array(t))
    return PrimitiveAssembly(
        (
            sq([0.5, 0.08, 0.08], [0.5, 0.0, 0.0]),
            sq([0.08, 0.3, 0.08], [0.0, 0.3, 0.0]),
            sq([0.08, 0.08, 0.18], [0.0, 0.0, 0.18]),
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_RESULTS: dict = {}


def report_acceptance(number: int, passed: bool, detail: str) -> None:
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])

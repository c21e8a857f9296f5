"""Central finite differences of the training loss, used as an independent gradient oracle.

The loss is only piecewise smooth: the renderer drops contributions below an
alpha floor, caps alpha, culls at three sigma and stops at a transmittance
floor. A stencil that straddles one of those switches gives a meaningless
difference quotient. Such stencils are detected by comparing the two one-sided
quotients, and the step is shrunk until they agree.
"""
import numpy as np

from sqsplat.camera import CameraView
from sqsplat.gaussians import GaussianModel
from sqsplat.metrics import combined_loss
from sqsplat.render import render


def loss_fn(model: GaussianModel, cam: CameraView, truth, beta: float):
    return combined_loss(render(model, cam), truth, beta)[0]


def fd_component(model, cam, truth, beta, name, ix, h=1e-6, shrink=4):
    """Central difference for one parameter entry; returns ``(value, step_used, smooth)``."""
    f0 = loss_fn(model, cam, truth, beta)
    for _ in range(shrink):
        mp, mm = model.copy(), model.copy()
        getattr(mp, name)[ix] += h
        getattr(mm, name)[ix] -= h
        fp, fm = loss_fn(mp, cam, truth, beta), loss_fn(mm, cam, truth, beta)
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        central = (fp - fm) / (2 * h)
        # One-sided quotients of a smooth function differ by O(h) only.
        if abs(fwd - bwd) <= 1e-3 * max(abs(central), 1e-3):
            return central, h, True
        h /= 10.0
    return central, h, False


def compare_all(model, cam, truth, beta, grads, rel=1e-3, abs_=1e-6):
    """Check every parameter entry; returns ``(n_checked, failures, n_nonsmooth)``."""
    failures = []
    n = 0
    nonsmooth = 0
    for name in GaussianModel.PARAM_NAMES:
        P = getattr(model, name)
        G = getattr(grads, name)
        for ix in np.ndindex(P.shape):
            fd, h, smooth = fd_component(model, cam, truth, beta, name, ix)
            n += 1
            if not smooth:
                nonsmooth += 1
            g = G[ix]
            if abs(fd - g) > max(rel * abs(fd), abs_):
                failures.append((name, ix, g, fd, h, smooth))
    return n, failures, nonsmooth


def random_scene(rng, res=32):
    """At most ten Gaussians in front of a randomly placed camera plus a target image."""
    n = int(rng.integers(1, 11))
    means = rng.uniform(-0.5, 0.5, (n, 3))
    log_scales = np.log(rng.uniform(0.04, 0.3, (n, 3)))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    logits = rng.uniform(-2.0, 3.0, n)
    sh = rng.normal(scale=0.15, size=(n, 16, 3))
    model = GaussianModel(means, log_scales, q, logits, sh, int(rng.integers(0, 4)))
    d = rng.normal(size=3)
    eye = 3.0 * d / np.linalg.norm(d)
    f = rng.uniform(30.0, 50.0)
    c = (res - 1) / 2.0
    cam = CameraView.look_at(eye, rng.uniform(-0.1, 0.1, 3), [0.0, 0.0, 1.0], f, f, c, c, res, res)
    if rng.uniform() < 0.5:
        truth = rng.uniform(0.0, 1.0, (res, res, 3))
    else:
        other = model.copy()
        other.means += rng.normal(scale=0.05, size=other.means.shape)
        truth = np.clip(render(other, cam) + rng.normal(scale=0.02, size=(res, res, 3)), 0.0, 1.0)
    beta = float(rng.uniform(0.0, 1.0))
    return model, cam, truth, beta

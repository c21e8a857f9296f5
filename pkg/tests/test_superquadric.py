import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqsplat.errors import DegenerateRotation
from sqsplat.rotations import axis_angle_to_dcm, dcm_to_rot6d
from sqsplat.superquadric import (
    PARAMS_PER_PRIMITIVE,
    PrimitiveAssembly,
    SuperquadricParams,
    assembly_to_pointcloud,
    canonical_points,
    implicit_value,
    sample_primitive,
    sample_surface,
    taper_points,
)


def sq(alpha=(1, 1, 1), eps=(1, 1), trans=(0, 0, 0), taper=(0, 0), rot6d=(1, 0, 0, 0, 1, 0)):
    return SuperquadricParams(np.array(alpha, float), np.array(eps, float), np.array(trans, float), np.array(rot6d, float), np.array(taper, float))


def test_parameter_count_is_16():
    assert PARAMS_PER_PRIMITIVE == 16
    assert sq().to_vector().shape == (16,)
    assert SuperquadricParams.from_vector(np.arange(1, 17.0) / 16).to_vector().shape == (16,)


def test_epsilon_clamped_and_alpha_positive():
    p = sq(eps=(0.001, 5.0))
    np.testing.assert_array_equal(p.epsilon, [0.05, 2.0])
    with pytest.raises(ValueError):
        sq(alpha=(1, 0, 1))
    with pytest.raises(ValueError):
        sq(taper=(1.5, 0))


def test_unit_sphere_point_at_eta0_omega0():
    p = canonical_points(np.ones(3), np.ones(2), np.array([0.0]), np.array([0.0]))
    np.testing.assert_allclose(p, [[1.0, 0.0, 0.0]], atol=1e-15)


def test_ellipsoid_residual():
    pts = sample_surface(sq(alpha=(2, 1, 1)), 20, 30).points
    np.testing.assert_allclose((pts[:, 0] / 2) ** 2 + pts[:, 1] ** 2 + pts[:, 2] ** 2, 1.0, atol=1e-9)


def test_taper_doubles_x_at_top():
    base = canonical_points(np.ones(3), np.ones(2), np.array([np.pi / 4]), np.array([0.0]))
    top = base.copy()
    top[0] = [0.3, 0.1, 1.0]  # a point with z = alpha_3
    out = taper_points(top, np.ones(3), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out[0], [0.6, 0.1, 1.0], atol=1e-15)


def test_sample_surface_applies_taper_pointwise():
    p = sq(taper=(0.5, -0.3))
    tapered = sample_surface(p, 9, 12).points
    plain = sample_surface(sq(), 9, 12).points
    z = plain[:, 2]
    np.testing.assert_allclose(tapered[:, 0], (0.5 * z + 1) * plain[:, 0], atol=1e-12)
    np.testing.assert_allclose(tapered[:, 1], (-0.3 * z + 1) * plain[:, 1], atol=1e-12)
    np.testing.assert_allclose(tapered[:, 2], z, atol=1e-12)


def test_sample_surface_preconditions():
    with pytest.raises(ValueError):
        sample_surface(sq(), 1, 10)
    with pytest.raises(ValueError):
        sample_surface(sq(), 5, 2)


def test_poles_deduplicated():
    pts = sample_surface(sq(), 10, 16).points
    assert len(np.unique(pts, axis=0)) == len(pts)
    # 8 interior rings of 16 plus the two poles
    assert len(pts) == 8 * 16 + 2


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3),
    st.lists(st.floats(0.1, 2.0), min_size=2, max_size=2),
)
def test_implicit_residual_property(alpha, eps):
    alpha, eps = np.array(alpha), np.array(eps)
    pts = sample_surface(sq(alpha=alpha, eps=eps), 12, 16).points
    assert np.max(np.abs(implicit_value(pts, alpha, eps) - 1.0)) < 1e-9


def test_assembly_unit_sphere_cloud():
    cloud = assembly_to_pointcloud(PrimitiveAssembly((sq(),)), 100)
    assert len(cloud) == 100
    np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 1.0, atol=1e-9)


def test_assembly_cluster_centroids():
    asm = PrimitiveAssembly((sq(), sq(trans=(3, 0, 0))))
    pts = assembly_to_pointcloud(asm, 500).points
    c = pts[500:].mean(axis=0) - pts[:500].mean(axis=0)
    np.testing.assert_allclose(c, [3, 0, 0], atol=0.1)


def test_assembly_count():
    asm = PrimitiveAssembly((sq(), sq(alpha=(0.5, 1, 2)), sq(eps=(0.3, 0.3))))
    assert len(assembly_to_pointcloud(asm, 1000)) == 3000


def test_sample_primitive_exact_count():
    for n in (1, 7, 100, 1001):
        assert len(sample_primitive(sq(eps=(0.3, 0.7)), n)) == n


def test_degenerate_pose_propagates():
    with pytest.raises(DegenerateRotation):
        assembly_to_pointcloud(PrimitiveAssembly((sq(rot6d=(0, 0, 0, 0, 1, 0)),)), 10)


def test_empty_assembly_rejected():
    with pytest.raises(ValueError):
        PrimitiveAssembly(())


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0, np.pi))
def test_assembly_equivariance(axis, angle):
    if np.linalg.norm(axis) < 1e-3:
        return
    Q = axis_angle_to_dcm(axis, angle)
    asm = PrimitiveAssembly(
        (
            sq(alpha=(0.3, 0.2, 0.5), eps=(0.4, 0.8), trans=(0.1, -0.2, 0.3), taper=(0.2, -0.1),
               rot6d=dcm_to_rot6d(axis_angle_to_dcm([1, 2, 3], 0.7))),
            sq(alpha=(0.6, 0.1, 0.1), trans=(0.5, 0, 0)),
        )
    )
    a = assembly_to_pointcloud(asm, 200).points
    b = assembly_to_pointcloud(asm.transformed(Q), 200).points
    assert np.max(np.abs(a @ Q.T - b)) < 1e-9


def test_assembly_json_roundtrip(tmp_path):
    asm = PrimitiveAssembly((sq(alpha=(1, 2, 3), eps=(0.2, 0.9), trans=(1, 2, 3), taper=(0.1, 0.2)),))
    asm.save(tmp_path / "a.json")
    doc = json.loads((tmp_path / "a.json").read_text())
    assert set(doc["primitives"][0]) == {"alpha", "epsilon", "trans", "rot6d", "taper"}
    back = PrimitiveAssembly.load(tmp_path / "a.json")
    np.testing.assert_array_equal(back.primitives[0].to_vector(), asm.primitives[0].to_vector())

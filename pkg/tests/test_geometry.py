import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gctrack.geometry import (
    BehindCamera,
    CameraIntrinsics,
    InvalidViewpoint,
    PlaneCoeffs,
    RigidTransform,
    corner_rays,
    focal_length,
    plane_in_frame,
    project_frustum,
    project_to_image,
    world_to_camera,
    camera_to_world,
    LU,
    LD,
    RU,
    RD,
    CENTER,
)

NADIR_R = np.column_stack([[0.0, 0, 1], [0, -1, 0], [1, 0, 0]])  # optical axis -> world -z


def nadir_transform(height=10.0):
    return RigidTransform(NADIR_R, np.array([0.0, 0.0, height]))


def test_focal_length_square_fov():
    assert focal_length(84, math.pi / 2) == pytest.approx(42.0, abs=1e-12)


def test_focal_length_pi_third():
    assert focal_length(84, math.pi / 3) == pytest.approx(84 / (2 * math.tan(math.pi / 6)), rel=1e-12)
    assert focal_length(84, math.pi / 3) == pytest.approx(72.746, abs=1e-3)


@pytest.mark.parametrize("fov", [0.0, -0.5, math.pi, 4.0])
def test_focal_length_rejects_degenerate_fov(fov):
    with pytest.raises(ValueError):
        focal_length(2, fov)
    with pytest.raises(ValueError):
        CameraIntrinsics(2, 2, fov)


def test_intrinsics_f_matches_focal_length():
    intr = CameraIntrinsics(84, 84, 1.0)
    assert intr.f == focal_length(84, 1.0)


def test_scaled_intrinsics_preserves_focal_length():
    intr = CameraIntrinsics(84, 84, 1.0)
    clip = intr.scaled(0.7)
    assert clip.width == pytest.approx(0.7 * 84)
    assert clip.f == pytest.approx(intr.f, rel=1e-12)


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # det -1


def test_rigid_transform_inverse_roundtrip():
    t = nadir_transform()
    eye = t.compose(t.inverse()).as_matrix()
    assert np.allclose(eye, np.eye(4), atol=1e-9)


def test_plane_normalizes_on_construction():
    p = PlaneCoeffs(np.array([0.0, 0.0, 2.0]), 4.0)
    assert np.allclose(p.normal, [0, 0, 1], atol=1e-12)
    assert p.offset == pytest.approx(2.0)
    with pytest.raises(ValueError):
        PlaneCoeffs(np.zeros(3), 1.0)


def test_plane_in_frame_identity():
    p = PlaneCoeffs(np.array([0.0, 0.0, 1.0]), -3.0)
    q = plane_in_frame(p, RigidTransform.identity())
    assert np.allclose(q.normal, p.normal) and q.offset == pytest.approx(p.offset)


def _fit_plane_through_points(pts):
    """Oracle: fit a plane to three non-collinear points."""
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    n /= np.linalg.norm(n)
    return n, -float(n @ pts[0])


def test_plane_in_frame_nadir_matches_point_fit_oracle():
    t_cw = nadir_transform(10.0)
    ground = PlaneCoeffs(np.array([0.0, 0.0, 1.0]), 0.0)
    cam_plane = plane_in_frame(ground, t_cw.inverse())
    # oracle: transform three ground points into the camera frame and fit
    pts_world = np.array([[0.0, 0, 0], [3.0, 1, 0], [-2.0, 5, 0]])
    pts_cam = np.array([world_to_camera(t_cw, p) for p in pts_world])
    n, d = _fit_plane_through_points(pts_cam)
    if n @ cam_plane.normal < 0:
        n, d = -n, -d
    assert np.allclose(cam_plane.normal, n, atol=1e-9)
    assert cam_plane.offset == pytest.approx(d, abs=1e-9)
    assert np.allclose(cam_plane.normal, [1.0, 0, 0], atol=1e-12)
    assert cam_plane.offset == pytest.approx(10.0)


def test_plane_in_frame_horizontal_translation_keeps_offset():
    ground = PlaneCoeffs(np.array([0.0, 0.0, 1.0]), -2.0)  # z = 2
    for shift in ([5.0, 0, 0], [0, -7.0, 0], [3.0, 4.0, 0]):
        t = RigidTransform(np.eye(3), np.array(shift))
        moved = plane_in_frame(ground, t)
        assert moved.offset == pytest.approx(ground.offset, abs=1e-12)
        pts_world = np.array([[0.0, 0, 2], [1.0, 0, 2], [0, 1.0, 2]])
        pts_new = np.array([t.apply(p) for p in pts_world])
        n, d = _fit_plane_through_points(pts_new)
        if n @ moved.normal < 0:
            n, d = -n, -d
        assert moved.offset == pytest.approx(d, abs=1e-9)


def test_plane_roundtrip_through_inverse():
    rng = np.random.default_rng(7)
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        t = RigidTransform(r, rng.normal(size=3))
        plane = PlaneCoeffs(rng.normal(size=3), rng.normal())
        back = plane_in_frame(plane_in_frame(plane, t), t.inverse())
        assert np.allclose(back.normal, plane.normal, atol=1e-9)
        assert back.offset == pytest.approx(plane.offset, abs=1e-9)


def test_corner_rays_fixture():
    rays = corner_rays(CameraIntrinsics(84, 84, math.pi / 2))
    assert np.allclose(rays[LU], [-42, -42, 42])
    assert np.allclose(rays[LD], [-42, -42, -42])
    assert np.allclose(rays[RU], [-42, 42, 42])
    assert np.allclose(rays[RD], [-42, 42, -42])
    assert np.allclose(rays[CENTER], [-42, 0, 0])


def test_corner_rays_rectangular_image():
    rays = corner_rays(CameraIntrinsics(84, 42, math.pi / 2))
    assert np.allclose(rays[RD], [-42, 42, -21])


def test_center_ray_direction_proportional_to_optical_axis():
    rays = corner_rays(CameraIntrinsics(31, 55, 0.83))
    d = rays[CENTER]
    assert d[1] == 0.0 and d[2] == 0.0 and d[0] < 0.0


def test_project_frustum_nadir_square():
    intr = CameraIntrinsics(84, 84, math.pi / 2)
    proj = project_frustum(intr, PlaneCoeffs(np.array([1.0, 0, 0]), 10.0))
    assert np.allclose(proj.lu, [-10, -10, 10], atol=1e-12)
    assert np.allclose(proj.rd, [-10, 10, -10], atol=1e-12)
    assert np.allclose(proj.cg, [-10, 0, 0], atol=1e-12)


def test_project_frustum_square_halfside_scales_with_f():
    intr = CameraIntrinsics(60, 60, 1.2)
    depth = 7.5
    proj = project_frustum(intr, PlaneCoeffs(np.array([1.0, 0, 0]), depth))
    half = depth * (intr.width / 2) / intr.f
    for corner in proj.quad():
        assert abs(corner[1]) == pytest.approx(half, rel=1e-12)
        assert abs(corner[2]) == pytest.approx(half, rel=1e-12)


def test_project_frustum_rejects_camera_facing_away():
    intr = CameraIntrinsics(84, 84, math.pi / 2)
    with pytest.raises(InvalidViewpoint):
        project_frustum(intr, PlaneCoeffs(np.array([-1.0, 0, 0]), 10.0))


def test_project_frustum_rejects_horizon_in_view():
    intr = CameraIntrinsics(84, 84, math.pi / 2)
    # plane nearly parallel to an upper corner ray
    with pytest.raises(InvalidViewpoint):
        project_frustum(intr, PlaneCoeffs(np.array([1.0, 0.0, 1.0]), 10.0))


def test_frustum_points_satisfy_plane_equation():
    intr = CameraIntrinsics(84, 84, 1.0)
    plane = PlaneCoeffs(np.array([0.83, 0.02, 0.41]), 17.0)
    proj = project_frustum(intr, plane)
    for p in (*proj.quad(), proj.cg):
        assert abs(plane.evaluate(p)) < 1e-9


def test_world_to_camera_identity_and_nadir():
    assert np.allclose(world_to_camera(RigidTransform.identity(), [1.0, 2, 3]), [1, 2, 3])
    t = nadir_transform(10.0)
    assert np.allclose(world_to_camera(t, [0.0, 0, 0]), [-10, 0, 0], atol=1e-12)


@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.floats(-math.pi, math.pi),
    st.floats(0.2, 1.4),
)
@settings(max_examples=50, deadline=None)
def test_world_camera_roundtrip(p, yaw, pitch):
    cy, sy, cp, sp = math.cos(yaw), math.sin(yaw), math.cos(pitch), math.sin(pitch)
    r = np.array([[-cp * cy, sy, sp * cy], [-cp * sy, -cy, sp * sy], [sp, 0.0, cp]])
    t = RigidTransform(r, np.array([3.0, -2.0, 15.0]))
    assert np.allclose(camera_to_world(t, world_to_camera(t, p)), p, atol=1e-9)


def test_project_to_image_center_and_boundary():
    intr = CameraIntrinsics(84, 84, math.pi / 2)
    u, v, vis = project_to_image(intr, [-intr.f, 0.0, 0.0])
    assert (u, v, vis) == (0.0, 0.0, True)
    u, v, vis = project_to_image(intr, [-10.0, -10.0, 10.0])
    assert u == pytest.approx(-42.0, abs=1e-9)
    assert v == pytest.approx(42.0, abs=1e-9)
    assert vis  # border counts as visible


def test_project_to_image_rejects_behind_camera():
    intr = CameraIntrinsics(84, 84, math.pi / 2)
    with pytest.raises(BehindCamera):
        project_to_image(intr, [5.0, 0.0, 0.0])
    with pytest.raises(BehindCamera):
        project_to_image(intr, [0.0, 1.0, 0.0])


def test_projected_corners_map_back_to_image_corners():
    intr = CameraIntrinsics(84, 84, 1.0)
    plane = PlaneCoeffs(np.array([0.9, 0.05, 0.43]), 15.0)
    proj = project_frustum(intr, plane)
    expected = {
        "lu": (-42.0, 42.0),
        "ld": (-42.0, -42.0),
        "ru": (42.0, 42.0),
        "rd": (42.0, -42.0),
    }
    for name, (eu, ev) in expected.items():
        u, v, vis = project_to_image(intr, getattr(proj, name))
        assert u == pytest.approx(eu, abs=1e-6)
        assert v == pytest.approx(ev, abs=1e-6)
        assert vis

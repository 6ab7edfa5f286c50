"""Projective camera geometry for a downward-gimballed tracking camera.

Camera frame convention (fixed throughout the package):
    optical axis along -x, image plane at x = -f,
    +y = image right, +z = image up, optical center at the origin.
Angles are radians, distances meters, pixel coordinates real-valued.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# row indices into the (5, 3) corner-ray / projection arrays
LU, LD, RU, RD, CENTER = range(5)

_ORTHO_TOL = 1e-9


class InvalidViewpoint(Exception):
    """A viewing ray is parallel to or diverging from the ground plane."""


class BehindCamera(Exception):
    """Point lies on or behind the image plane side of the optical center."""


def focal_length(width: float, fov: float) -> float:
    """Pinhole focal length in pixels from image width and horizontal FoV."""
    if not 0.0 < fov < math.pi:
        raise ValueError(f"fov must lie in (0, pi), got {fov}")
    return width / (2.0 * math.tan(fov / 2.0))


@dataclass(frozen=True)
class CameraIntrinsics:
    width: float
    height: float
    fov: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.fov < math.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")

    @property
    def f(self) -> float:
        return focal_length(self.width, self.fov)

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Centered sub-image with width/height scaled by `factor`.

        The focal length is preserved, so the scaled camera shares the
        original's optical center and viewing rays.
        """
        if not 0.0 < factor <= 1.0:
            raise ValueError(f"scale factor must lie in (0, 1], got {factor}")
        new_fov = 2.0 * math.atan(factor * math.tan(self.fov / 2.0))
        return CameraIntrinsics(self.width * factor, self.height * factor, new_fov)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation mapping point coordinates between frames.

    `apply(p)` returns R @ p + t.  For a camera-to-world transform the
    translation is the camera position expressed in world coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not np.allclose(r @ r.T, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be proper (det = +1)")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return _trusted_transform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying `other` first, then `self`."""
        return _trusted_transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def _trusted_transform(rotation: np.ndarray, translation: np.ndarray) -> RigidTransform:
    """Construct without re-validating; for rotations valid by construction."""
    t = object.__new__(RigidTransform)
    object.__setattr__(t, "rotation", rotation)
    object.__setattr__(t, "translation", translation)
    return t


@dataclass(frozen=True)
class PlaneCoeffs:
    """Plane a*x + b*y + c*z + d = 0 with unit normal (a, b, c)."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def evaluate(self, p) -> float:
        """Signed distance of `p` from the plane."""
        return float(self.normal @ np.asarray(p, dtype=float) + self.offset)


def plane_in_frame(plane: PlaneCoeffs, xf: RigidTransform) -> PlaneCoeffs:
    """Re-express `plane` in the frame that `xf` maps point coordinates into.

    If points transform as p1 = R p0 + t, the coefficients transform as
    n1 = R n0 and d1 = d0 - n1 . t.
    """
    n1 = xf.rotation @ plane.normal
    d1 = plane.offset - float(n1 @ xf.translation)
    return PlaneCoeffs(n1, d1)


def corner_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Directions through the optical center and the image corners/center.

    Rows ordered (LU, LD, RU, RD, CENTER); the image plane sits at x = -f.
    """
    f = intr.f
    hw, hh = intr.width / 2.0, intr.height / 2.0
    return np.array(
        [
            [-f, -hw, hh],
            [-f, -hw, -hh],
            [-f, hw, hh],
            [-f, hw, -hh],
            [-f, 0.0, 0.0],
        ]
    )


@dataclass(frozen=True)
class GroundProjection:
    """Ground intersections of the four corner rays and the center ray."""

    lu: np.ndarray
    ld: np.ndarray
    ru: np.ndarray
    rd: np.ndarray
    cg: np.ndarray

    def quad(self) -> np.ndarray:
        """Corner ring (lu, ru, rd, ld) as a (4, 3) array."""
        return np.array([self.lu, self.ru, self.rd, self.ld])


def project_frustum(intr: CameraIntrinsics, ground_c: PlaneCoeffs) -> GroundProjection:
    """Intersect the corner and center rays with the ground plane.

    `ground_c` is the ground plane expressed in the camera frame.  Raises
    InvalidViewpoint when any ray fails to cross the plane in front of the
    camera (horizon inside the frustum, or camera facing away).
    """
    # Orient coefficients so the optical center is on the positive side;
    # with offset > 0 a ray hits the plane forward iff its denominator > 0.
    n, d = ground_c.normal, ground_c.offset
    if abs(d) < 1e-9:
        raise InvalidViewpoint("optical center lies on the ground plane")
    if d < 0.0:
        n, d = -n, -d
    rays = corner_rays(intr)
    denoms = -rays @ n  # a*f -/+ b*W/2 +/- c*H/2 per corner; a*f for center
    if np.any(denoms <= 1e-9):
        raise InvalidViewpoint(
            f"corner ray parallel to or diverging from ground (denominators {denoms})"
        )
    points = rays * (d / denoms)[:, None]
    return GroundProjection(*points)


def world_to_camera(t_cw: RigidTransform, p_world) -> np.ndarray:
    """Map a world point into the camera frame given the camera-to-world transform."""
    return t_cw.inverse().apply(p_world)


def camera_to_world(t_cw: RigidTransform, p_cam) -> np.ndarray:
    return t_cw.apply(p_cam)


def project_to_image(intr: CameraIntrinsics, p_cam) -> tuple[float, float, bool]:
    """Pinhole projection of a camera-frame point onto the image plane.

    Returns (u, v, visible) with u measured along +y and v along +z,
    in pixels from the image center.  Points on the image border count
    as visible (1e-9 px tolerance).  Raises BehindCamera for x >= 0.
    """
    p = np.asarray(p_cam, dtype=float)
    if p[0] >= 0.0:
        raise BehindCamera(f"point x = {p[0]} is not in front of the camera")
    s = -intr.f / p[0]
    u, v = s * p[1], s * p[2]
    tol = 1e-9
    visible = abs(u) <= intr.width / 2.0 + tol and abs(v) <= intr.height / 2.0 + tol
    return u, v, visible

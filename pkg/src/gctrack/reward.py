"""Deviation metric and reward fields over the projected ground quadrilateral.

The deviation of a ground point is the ratio of its distance from the
center projection to the distance from the center to the quad boundary
along the same ray: 0 at the center, 1 on the boundary, > 1 outside.
The goal-centered reward is a strictly decreasing function of that
deviation, truncated to the ground projection of a centered sub-image;
the distance reward is the Euclidean-falloff baseline it is compared to.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import GroundProjection

_Y_AXIS = np.array([0.0, 1.0, 0.0])
_X_AXIS = np.array([1.0, 0.0, 0.0])

#: sentinel value for grid cells outside the projected quad
OUTSIDE = float("nan")


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 4.0
    lambda_clip: float = 0.7

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.lambda_clip <= 1.0:
            raise ValueError("lambda_clip must lie in (0, 1]")

    @property
    def max_reward(self) -> float:
        return math.tanh(self.alpha)


@dataclass(frozen=True)
class Deviation:
    phi: float
    boundary_point: np.ndarray | None  # None only for the degenerate center


@dataclass(frozen=True)
class CounterexamplePair:
    p1: np.ndarray
    p2: np.ndarray
    phi1: float
    phi2: float
    d1: float
    d2: float


_NEXT4 = np.array([1, 2, 3, 0])


def _ccw(ring: np.ndarray) -> np.ndarray:
    nxt = ring[_NEXT4] if len(ring) == 4 else np.roll(ring, -1, axis=0)
    area = float(ring[:, 0] @ nxt[:, 1] - ring[:, 1] @ nxt[:, 0])
    return ring if area >= 0 else ring[::-1]


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


class QuadFrame:
    """2D working frame on the ground plane, anchored at the center projection.

    Precomputes everything the reward fields share for one camera pose:
    an in-plane orthonormal basis, the projected quad and its clipped
    counterpart in 2D, and the largest in-quad offset from the center.
    """

    def __init__(self, proj: GroundProjection, lambda_clip: float = 1.0):
        quad = proj.quad()
        n = _cross3(quad[1] - quad[0], quad[3] - quad[0])
        n /= math.sqrt(n @ n)
        if n @ proj.cg > 0:
            n = -n  # normal points from the plane toward the camera origin
        axis = _Y_AXIS if abs(n @ _Y_AXIS) < 0.9 else _X_AXIS
        e1 = axis - (axis @ n) * n
        e1 /= math.sqrt(e1 @ e1)
        e2 = _cross3(n, e1)

        self.cg = proj.cg
        self.normal = n
        self.basis = np.stack([e1, e2], axis=1)  # (3, 2)
        self.quad2d = _ccw((quad - proj.cg) @ self.basis)
        self.clip2d = _ccw((self._clip_corners(proj, lambda_clip) - proj.cg) @ self.basis)
        self.max_offset = math.sqrt(float(np.max((self.quad2d * self.quad2d).sum(axis=1))))
        self._edges_full = self._edge_arrays(self.quad2d)
        self._edges_clip = self._edge_arrays(self.clip2d)

    @staticmethod
    def _clip_corners(proj: GroundProjection, lam: float) -> np.ndarray:
        """Ground hits of the corner rays of the centered sub-image.

        Each corner point doubles as its own ray direction; shrinking its
        lateral components by `lam` around the center ray gives the
        sub-image corner ray exactly, no intrinsics needed.
        """
        quad = proj.quad()
        dirs = quad / -quad[:, :1]  # rescaled to x = -1
        cdir = proj.cg / -proj.cg[0]
        clip_dirs = (1.0 - lam) * cdir + lam * dirs
        # intersect with the plane through the quad: n . x = n . quad[0]
        n = _cross3(quad[1] - quad[0], quad[3] - quad[0])
        t = (quad[0] @ n) / (clip_dirs @ n)
        return clip_dirs * t[:, None]

    @staticmethod
    def _edge_arrays(ring: np.ndarray):
        a = ring
        e = ring[_NEXT4] - ring
        return a, e, np.sqrt((e * e).sum(axis=1))

    def to_plane(self, points) -> np.ndarray:
        """Project camera-frame ground points to 2D frame coordinates."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p - self.cg) @ self.basis

    def to_camera(self, points2d) -> np.ndarray:
        q = np.atleast_2d(np.asarray(points2d, dtype=float))
        return self.cg + q @ self.basis.T

    def plane_error(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.abs((p - self.cg) @ self.normal)

    def _contains(self, q: np.ndarray, edges, tol: float = 1e-9) -> np.ndarray:
        a, e, elen = edges
        # signed distance of each point from each (ccw) edge line
        sd = (e[:, 0] * (q[:, None, 1] - a[:, 1]) - e[:, 1] * (q[:, None, 0] - a[:, 0])) / elen
        return np.all(sd >= -tol, axis=1)

    def in_quad(self, q: np.ndarray) -> np.ndarray:
        return self._contains(q, self._edges_full)

    def in_clip(self, q: np.ndarray) -> np.ndarray:
        return self._contains(q, self._edges_clip)

    def boundary_distance(self, dirs: np.ndarray) -> np.ndarray:
        """Distance from the center to the quad boundary along unit `dirs`."""
        a, e, _ = self._edges_full
        denom = dirs[:, None, 0] * e[:, 1] - dirs[:, None, 1] * e[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (a[:, 0] * e[:, 1] - a[:, 1] * e[:, 0]) / denom
            s = (a[:, 0] * dirs[:, None, 1] - a[:, 1] * dirs[:, None, 0]) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 0.0) & (s >= -1e-9) & (s <= 1.0 + 1e-9)
        t = np.where(ok, t, np.inf)
        tmin = t.min(axis=1)
        if np.any(~np.isfinite(tmin)):
            raise RuntimeError("ray from center failed to cross the quad boundary")
        return tmin

    def phi(self, q: np.ndarray) -> np.ndarray:
        """Deviation values for 2D points (vectorized)."""
        r = np.linalg.norm(q, axis=1)
        out = np.zeros(len(q))
        far = r >= 1e-12
        if np.any(far):
            u = q[far] / r[far, None]
            out[far] = r[far] / self.boundary_distance(u)
        return out

    def sample_in_quad(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform 2D points inside the quad by bounding-box rejection."""
        lo, hi = self.quad2d.min(axis=0), self.quad2d.max(axis=0)
        got = []
        n_got = 0
        while n_got < count:
            cand = rng.uniform(lo, hi, size=(2 * count, 2))
            keep = cand[self.in_quad(cand)]
            got.append(keep)
            n_got += len(keep)
        return np.concatenate(got)[:count]


def deviation(p_g, proj: GroundProjection, frame: QuadFrame | None = None) -> Deviation:
    """Deviation of a ground point from the center projection (Deviation.phi)."""
    frame = frame or QuadFrame(proj)
    p = np.asarray(p_g, dtype=float)
    if frame.plane_error(p)[0] > 1e-6:
        raise ValueError("point does not lie on the projected ground plane")
    q = frame.to_plane(p)[0]
    r = float(np.linalg.norm(q))
    if r < 1e-12:
        return Deviation(0.0, None)
    u = q / r
    t = float(frame.boundary_distance(u[None, :])[0])
    return Deviation(r / t, frame.to_camera((u * t)[None, :])[0])


def goal_centered_reward(p_g, proj: GroundProjection, cfg: RewardConfig = RewardConfig()) -> float:
    """tanh(alpha * (1 - phi)^3) inside the clipped projection, 0 outside."""
    frame = QuadFrame(proj, cfg.lambda_clip)
    q = frame.to_plane(p_g)
    if not frame.in_clip(q)[0]:
        return 0.0
    phi = float(frame.phi(q)[0])
    return math.tanh(cfg.alpha * (1.0 - phi) ** 3)


def sparse_reward(p_g, proj: GroundProjection) -> float:
    """1 when the point lies inside the full projected quad, else 0."""
    frame = QuadFrame(proj)
    return 1.0 if frame.in_quad(frame.to_plane(p_g))[0] else 0.0


def distance_reward(p_g, proj: GroundProjection, scale: float) -> float:
    """Linear Euclidean falloff from the center projection, cut off at `scale`."""
    if scale <= 0:
        raise ValueError("distance scale must be positive")
    d = float(np.linalg.norm(np.asarray(p_g, dtype=float) - proj.cg))
    return max(0.0, 1.0 - d / scale)


def max_offset(proj: GroundProjection) -> float:
    """Largest in-quad distance from the center projection (farthest corner)."""
    return float(np.max(np.linalg.norm(proj.quad() - proj.cg, axis=1)))


def find_counterexample(
    proj: GroundProjection,
    rng: np.random.Generator,
    samples: int,
    batch: int = 256,
) -> CounterexamplePair | None:
    """Search for an in-quad pair whose center-distance order opposes deviation.

    Draws `samples` point pairs uniformly inside the quad and returns the
    first (ordered by deviation) with phi1 < phi2 but d1 > d2, or None when
    the budget is exhausted.
    """
    if samples < 1:
        return None
    frame = QuadFrame(proj)
    remaining = samples
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        pa = frame.sample_in_quad(rng, n)
        pb = frame.sample_in_quad(rng, n)
        phi_a, phi_b = frame.phi(pa), frame.phi(pb)
        d_a = np.linalg.norm(pa, axis=1)
        d_b = np.linalg.norm(pb, axis=1)
        # orient each pair so deviation increases from first to second
        swap = phi_a > phi_b
        phi1 = np.where(swap, phi_b, phi_a)
        phi2 = np.where(swap, phi_a, phi_b)
        d1 = np.where(swap, d_b, d_a)
        d2 = np.where(swap, d_a, d_b)
        hits = np.nonzero((phi1 < phi2) & (d1 > d2))[0]
        if len(hits):
            i = int(hits[0])
            q1 = np.where(swap[i], pb[i], pa[i])
            q2 = np.where(swap[i], pa[i], pb[i])
            return CounterexamplePair(
                frame.to_camera(q1[None, :])[0],
                frame.to_camera(q2[None, :])[0],
                float(phi1[i]),
                float(phi2[i]),
                float(d1[i]),
                float(d2[i]),
            )
    return None


@dataclass(frozen=True)
class ContourGrid:
    """Field values on a regular grid over the quad's bounding box.

    `values[i, j]` holds the field at (ys[i], zs[j]) in the quad's plane
    frame; cells outside the quad carry the OUTSIDE (NaN) sentinel.
    """

    which: str
    ys: np.ndarray
    zs: np.ndarray
    values: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "z", "value"])
            for i, y in enumerate(self.ys):
                for j, z in enumerate(self.zs):
                    v = self.values[i, j]
                    w.writerow([repr(float(y)), repr(float(z)), "NaN" if np.isnan(v) else repr(float(v))])


def contour_grid(
    proj: GroundProjection,
    which: str,
    resolution: tuple[int, int],
    cfg: RewardConfig = RewardConfig(),
) -> ContourGrid:
    """Evaluate a reward field on an n-by-m grid over the quad's bounding box."""
    n, m = resolution
    if n < 2 or m < 2:
        raise ValueError("resolution must be at least 2x2")
    if which not in ("deviation", "goal_centered", "distance"):
        raise ValueError(f"unknown field {which!r}")
    frame = QuadFrame(proj, cfg.lambda_clip)
    lo, hi = frame.quad2d.min(axis=0), frame.quad2d.max(axis=0)
    ys = np.linspace(lo[0], hi[0], n)
    zs = np.linspace(lo[1], hi[1], m)
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    pts = np.stack([gy.ravel(), gz.ravel()], axis=1)
    inside = frame.in_quad(pts)
    vals = np.full(len(pts), OUTSIDE)
    if which == "deviation":
        vals[inside] = frame.phi(pts[inside])
    elif which == "goal_centered":
        phi = frame.phi(pts[inside])
        r = np.tanh(cfg.alpha * (1.0 - phi) ** 3)
        r[~frame.in_clip(pts[inside])] = 0.0
        vals[inside] = r
    else:
        d = np.linalg.norm(pts[inside], axis=1)
        vals[inside] = np.maximum(0.0, 1.0 - d / frame.max_offset)
    return ContourGrid(which, ys, zs, vals.reshape(n, m))

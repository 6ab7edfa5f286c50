"""Evaluation protocol, tracking metrics, and numerical verification reports.

run_protocol plays a fixed grid of relative start angles with a greedy
policy and aggregates cumulative reward (sum of the goal-centered reward)
and tracking success rate (in-view steps over the maximum episode length).
verify_proposition and the world-frame ray solver provide the independent
checks behind the reward-design claims.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .env import ALTITUDE_RANGE, PITCH_RANGE, DroneState, TrackingEnv, camera_pose
from .geometry import CameraIntrinsics, GroundProjection, PlaneCoeffs, plane_in_frame, project_frustum
from .policy import PolicyParams, greedy_actions
from .reward import find_counterexample
from .seeding import angle_index, derive_rng

FOUR_ANGLES = (0.0, math.pi / 2.0, math.pi, 3.0 * math.pi / 2.0)


@dataclass(frozen=True)
class EvalProtocol:
    angles: tuple = FOUR_ANGLES
    episodes_per_angle: int = 10
    e_ml: int = 1500

    def __post_init__(self):
        if len(set(self.angles)) != len(self.angles):
            raise ValueError("protocol angles must be distinct")
        if any(not 0.0 <= a < 2.0 * math.pi for a in self.angles):
            raise ValueError("angles must lie in [0, 2*pi)")
        if self.episodes_per_angle < 1 or self.e_ml < 1:
            raise ValueError("episodes_per_angle and e_ml must be positive")


@dataclass
class EpisodeRecord:
    angle: float
    episode: int
    cr: float
    tsr: float
    steps: int


@dataclass
class EvalResult:
    cr_mean: float
    cr_std: float
    tsr_mean: float
    tsr_std: float
    per_angle: dict
    episodes: list = field(default_factory=list)

    @property
    def episode_count(self) -> int:
        return len(self.episodes)

    def episode_tsrs(self) -> np.ndarray:
        return np.array([e.tsr for e in self.episodes])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["angle", "episode", "cr", "tsr", "steps"])
            for e in self.episodes:
                w.writerow([repr(e.angle), e.episode, repr(e.cr), repr(e.tsr), e.steps])


def run_episode(env: TrackingEnv, params: PolicyParams, seed: int, yaw_offset: float):
    """One greedy-policy episode; returns (cr, tsr numerator, steps)."""
    _, obs = env.reset(seed=seed, yaw_offset=yaw_offset)
    cr = 0.0
    in_view = 0.0
    done = False
    steps = 0
    while not done:
        action = int(greedy_actions(params, obs[None, :])[0])
        _, r_gc, r_dt, done, _ = env.step(action)
        obs = env.observe()
        cr += r_gc
        in_view += r_dt
        steps += 1
    return cr, in_view, steps


def run_protocol(
    params: PolicyParams,
    make_env,
    protocol: EvalProtocol = EvalProtocol(),
    seed: int = 0,
    trace_dir=None,
) -> EvalResult:
    """Greedy evaluation over `angles x episodes_per_angle` pinned-angle episodes.

    Episode seeds derive from (seed, angle value, episode index), so equal
    angles replay identical episodes.  TSR divides in-view steps by the
    protocol's maximum episode length, penalizing early target loss.
    """
    env = make_env()
    episodes = []
    per_angle = {}
    for angle in protocol.angles:
        angle_eps = []
        for ep in range(protocol.episodes_per_angle):
            ep_seed = int(
                derive_rng(seed, "protocol-episode", angle_index(angle), ep).integers(2**63)
            )
            cr, in_view, steps = run_episode(env, params, ep_seed, angle)
            rec = EpisodeRecord(angle, ep, cr, in_view / protocol.e_ml, steps)
            episodes.append(rec)
            angle_eps.append(rec)
            if trace_dir is not None:
                env.export_trace(
                    f"{trace_dir}/trace_angle{angle:.4f}_ep{ep}.csv"
                )
        crs = np.array([e.cr for e in angle_eps])
        tsrs = np.array([e.tsr for e in angle_eps])
        per_angle[angle] = {
            "cr_mean": float(crs.mean()),
            "cr_std": float(crs.std()),
            "tsr_mean": float(tsrs.mean()),
            "tsr_std": float(tsrs.std()),
        }
    crs = np.array([e.cr for e in episodes])
    tsrs = np.array([e.tsr for e in episodes])
    return EvalResult(
        float(crs.mean()), float(crs.std()), float(tsrs.mean()), float(tsrs.std()), per_angle, episodes
    )


def welch_p(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Welch t-test p-value with degenerate zero-variance handling."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.std() == 0.0 and b.std() == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(sstats.ttest_ind(a, b, equal_var=False).pvalue)


def ablation_report(results: dict) -> str:
    """Aligned-column comparison of named EvalResults with pairwise Welch tests."""
    if len(results) < 2:
        raise ValueError("need at least two named results to compare")
    names = list(results)
    lines = []
    header = f"{'configuration':<24} {'CR':>16} {'TSR':>16} {'episodes':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for name, res in results.items():
        lines.append(
            f"{name:<24} {res.cr_mean:8.2f} ±{res.cr_std:6.2f} "
            f"{res.tsr_mean:8.3f} ±{res.tsr_std:5.3f} {res.episode_count:>9d}"
        )
    lines.append("")
    lines.append("pairwise Welch t-test on per-episode TSR")
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            p = welch_p(results[a].episode_tsrs(), results[b].episode_tsrs())
            diff = results[a].tsr_mean - results[b].tsr_mean
            lines.append(f"  {a} vs {b}: diff {diff:+.3f}, p = {p:.3g}")
    return "\n".join(lines)


def write_ablation_csv(path, results: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "cr_mean", "cr_std", "tsr_mean", "tsr_std", "episodes"])
        for name, res in results.items():
            w.writerow(
                [name, repr(res.cr_mean), repr(res.cr_std), repr(res.tsr_mean), repr(res.tsr_std), res.episode_count]
            )


def random_pose(rng: np.random.Generator) -> DroneState:
    """Drone pose drawn from the training randomization ranges."""
    return DroneState(
        np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(*ALTITUDE_RANGE)]),
        float(rng.uniform(-math.pi, math.pi)),
        float(rng.uniform(*PITCH_RANGE)),
    )


def pose_projection(intr: CameraIntrinsics, drone: DroneState) -> GroundProjection:
    """Ground projection of the camera frustum for a drone pose (ground z=0)."""
    inv = camera_pose(drone).inverse()
    ground = plane_in_frame(PlaneCoeffs(np.array([0.0, 0.0, 1.0]), 0.0), inv)
    return project_frustum(intr, ground)


def oracle_ground_points(intr: CameraIntrinsics, drone: DroneState) -> np.ndarray:
    """Independent ray-plane solver: intersect view rays with z=0 in the world.

    Walks a completely different arithmetic path from the camera-frame
    projection (world-frame rays against the explicit ground height), then
    maps the hits back into the camera frame for comparison.
    """
    from .geometry import corner_rays

    pose = camera_pose(drone)
    origin = pose.translation
    dirs_world = corner_rays(intr) @ pose.rotation.T
    tz = -origin[2] / dirs_world[:, 2]
    if np.any(tz <= 0):
        raise ValueError("a view ray does not descend to the ground")
    hits_world = origin + dirs_world * tz[:, None]
    inv = pose.inverse()
    return hits_world @ inv.rotation.T + inv.translation


@dataclass
class PoseCheck:
    pose_id: int
    pitch: float
    altitude: float
    max_error: float
    ok: bool


def verify_geometry(
    intr: CameraIntrinsics, n_poses: int, tolerance: float, seed: int
) -> tuple[list[PoseCheck], bool]:
    """Compare the closed-form frustum projection against the world-frame solver."""
    rng = derive_rng(seed, "verify-geometry")
    checks = []
    all_ok = True
    for i in range(n_poses):
        drone = random_pose(rng)
        proj = pose_projection(intr, drone)
        pts = np.array([proj.lu, proj.ld, proj.ru, proj.rd, proj.cg])
        oracle = oracle_ground_points(intr, drone)
        rel = np.linalg.norm(pts - oracle, axis=1) / np.maximum(
            1.0, np.linalg.norm(oracle, axis=1)
        )
        err = float(rel.max())
        ok = err <= tolerance
        all_ok &= ok
        checks.append(PoseCheck(i, drone.gimbal_pitch, drone.position[2], err, ok))
    return checks, all_ok


@dataclass
class PropositionRow:
    pose_id: int
    pitch: float
    altitude: float
    phi1: float
    phi2: float
    d1: float
    d2: float
    found: bool


@dataclass
class PropositionReport:
    rows: list
    all_found: bool

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pose_id", "pitch", "altitude", "phi1", "phi2", "d1", "d2", "found"])
            for r in self.rows:
                w.writerow(
                    [r.pose_id, repr(r.pitch), repr(r.altitude), repr(r.phi1), repr(r.phi2), repr(r.d1), repr(r.d2), int(r.found)]
                )


def verify_proposition(
    intr: CameraIntrinsics,
    n_poses: int,
    samples_per_pose: int,
    seed: int,
    poses: list[DroneState] | None = None,
) -> PropositionReport:
    """Search every pose for a pair ordered oppositely by deviation and distance.

    Passes only if a counterexample pair is found for all poses; per-pose
    rows carry the witnessing deviations and center distances.
    """
    rng = derive_rng(seed, "proposition")
    if poses is None:
        poses = [random_pose(rng) for _ in range(n_poses)]
    rows = []
    all_found = True
    for i, drone in enumerate(poses):
        proj = pose_projection(intr, drone)
        pair = find_counterexample(proj, derive_rng(seed, "proposition-pose", i), samples_per_pose)
        if pair is None:
            rows.append(
                PropositionRow(i, drone.gimbal_pitch, drone.position[2], math.nan, math.nan, math.nan, math.nan, False)
            )
            all_found = False
        else:
            rows.append(
                PropositionRow(
                    i, drone.gimbal_pitch, drone.position[2], pair.phi1, pair.phi2, pair.d1, pair.d2, True
                )
            )
    return PropositionReport(rows, all_found)


def read_trace_tsr(path, e_ml: int) -> float:
    """Recompute an episode TSR from an exported trace CSV."""
    total = 0.0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            total += float(row["r_dt"])
    return total / e_ml

"""Kinematic stand-in for the open-world drone tracking simulator.

The drone flies at a fixed randomized altitude with planar translation and
yaw control; a ground target follows phase-dependent behavior schedules.
Rewards are evaluated geometrically from the camera's ground projection at
every step, so the environment is fully deterministic given its seed.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .geometry import (
    CameraIntrinsics,
    PlaneCoeffs,
    RigidTransform,
    _trusted_transform,
    plane_in_frame,
    project_frustum,
    project_to_image,
    BehindCamera,
)
from .reward import QuadFrame, RewardConfig
from .seeding import derive_rng

ALTITUDE_RANGE = (13.0, 22.0)
PITCH_RANGE = (0.6, 1.38)
START_OFFSET_RANGE = (2.5, 4.5)

PHASE1_SPEED_RANGE = (5.0, 20.0)
BEHAVIOR_PROBS = (0.1, 0.5, 0.2, 0.2)  # stop, straight, turn left, turn right
TARGET_TURN_RATE = 0.5  # rad/s
DWELL_RANGE = (2.0, 6.0)  # seconds between behavior changes
OCCLUSION_PROB = 0.05  # per-step chance of an occlusion burst (phase 2)
OCCLUSION_STEPS = (5, 20)

FRAME_STACK = 4
N_ACTIONS = 7
GRID_SIZE = 11


class Action(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    LEFTWARD = 2
    RIGHTWARD = 3
    TURN_LEFT = 4
    TURN_RIGHT = 5
    STOP = 6


class Behavior(IntEnum):
    STOP = 0
    STRAIGHT = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


class StepAfterDone(Exception):
    """step() was called on a finished episode."""


@dataclass(frozen=True)
class DroneState:
    position: np.ndarray  # (x, y, altitude) meters
    yaw: float
    gimbal_pitch: float  # downward tilt from horizontal, fixed per episode


@dataclass(frozen=True)
class TargetState:
    position: np.ndarray  # z = ground height
    heading: float
    speed: float
    behavior: Behavior
    dwell_steps: int = 0  # steps until the phase-2 schedule resamples


@dataclass(frozen=True)
class WorldState:
    drone: DroneState
    target: TargetState


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 1500
    lost_threshold: int = 100
    dt: float = 0.04
    drone_speed: float = 40.0
    drone_yaw_rate: float = 2.0
    target_max_speed: float = 20.0
    phase: int = 1

    def __post_init__(self):
        if not self.max_steps > self.lost_threshold > 0:
            raise ValueError("need max_steps > lost_threshold > 0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.drone_speed <= 0 or self.drone_yaw_rate <= 0 or self.target_max_speed < 0:
            raise ValueError("speeds must be positive")
        if self.phase not in (1, 2):
            raise ValueError("phase must be 1 or 2")


def camera_pose(drone: DroneState) -> RigidTransform:
    """Camera-to-world transform for a yawed, pitch-down gimbal.

    The optical axis (camera -x) points along the drone heading, tilted
    down by the gimbal pitch; +y_cam is image-right, +z_cam image-up.
    """
    cy, sy = math.cos(drone.yaw), math.sin(drone.yaw)
    cp, sp = math.cos(drone.gimbal_pitch), math.sin(drone.gimbal_pitch)
    r_cw = np.array(
        [
            [-cp * cy, sy, sp * cy],
            [-cp * sy, -cy, sp * sy],
            [sp, 0.0, cp],
        ]
    )
    return _trusted_transform(r_cw, np.asarray(drone.position, dtype=float))


def target_update(
    target: TargetState,
    phase: int,
    dt: float,
    rng: np.random.Generator,
    max_speed: float = 20.0,
) -> TargetState:
    """Advance the target one control step under its phase schedule."""
    heading, speed, behavior, dwell = (
        target.heading,
        target.speed,
        target.behavior,
        target.dwell_steps,
    )
    if phase == 2:
        dwell -= 1
        if dwell <= 0:
            behavior = Behavior(rng.choice(4, p=BEHAVIOR_PROBS))
            speed = float(rng.uniform(0.0, max_speed))
            dwell = max(1, int(round(rng.uniform(*DWELL_RANGE) / dt)))
    if behavior == Behavior.TURN_LEFT:
        heading += TARGET_TURN_RATE * dt
    elif behavior == Behavior.TURN_RIGHT:
        heading -= TARGET_TURN_RATE * dt
    pos = target.position
    if behavior != Behavior.STOP:
        pos = pos + speed * dt * np.array([math.cos(heading), math.sin(heading), 0.0])
    return TargetState(pos, heading, speed, behavior, dwell)


class TrackingEnv:
    """Single tracking episode stream with deterministic seeded sampling.

    step() returns (state, r_gc, r_dt, done, info); info carries the
    deviation, the distance-baseline reward and the termination reason.
    """

    def __init__(
        self,
        intrinsics: CameraIntrinsics,
        reward_cfg: RewardConfig = RewardConfig(),
        cfg: EpisodeConfig = EpisodeConfig(),
        seed: int = 0,
        obs_mode: str = "features",
    ):
        if obs_mode not in ("features", "grid"):
            raise ValueError(f"unknown obs_mode {obs_mode!r}")
        self.intr = intrinsics
        self.reward_cfg = reward_cfg
        self.cfg = cfg
        self.obs_mode = obs_mode
        self.phase = cfg.phase
        self._pending_phase = cfg.phase
        self._ground = PlaneCoeffs(np.array([0.0, 0.0, 1.0]), 0.0)
        self._rng = derive_rng(seed, "env")
        self.state: WorldState | None = None
        self._done = True
        self._trace: list[tuple] = []

    @property
    def frame_length(self) -> int:
        return GRID_SIZE * GRID_SIZE if self.obs_mode == "grid" else 2 + 1 + 2 + N_ACTIONS

    @property
    def observation_dim(self) -> int:
        return FRAME_STACK * self.frame_length

    def set_phase(self, phase: int) -> None:
        """Schedule a curriculum phase change; applied at the next reset."""
        if phase not in (1, 2):
            raise ValueError("phase must be 1 or 2")
        self._pending_phase = phase

    def reset(self, seed: int | None = None, yaw_offset: float | None = None):
        """Start a new episode; `yaw_offset` pins the drone-target relative angle.

        Draw order: altitude, pitch, target heading, yaw offset, start
        offset (magnitude, sign), then the phase-specific target schedule.
        The yaw offset is always drawn so pinned and unpinned resets share
        the remaining stream.
        """
        if seed is not None:
            self._rng = derive_rng(seed, "episode")
        rng = self._rng
        self.phase = self._pending_phase

        altitude = float(rng.uniform(*ALTITUDE_RANGE))
        pitch = float(rng.uniform(*PITCH_RANGE))
        heading = float(rng.uniform(-math.pi, math.pi))
        drawn_offset = float(rng.uniform(-math.pi, math.pi))
        delta = drawn_offset if yaw_offset is None else float(yaw_offset)
        start_offset = float(rng.uniform(*START_OFFSET_RANGE)) * (1 if rng.random() < 0.5 else -1)

        if self.phase == 1:
            target = TargetState(
                np.zeros(3), heading, float(rng.uniform(*PHASE1_SPEED_RANGE)), Behavior.STRAIGHT
            )
        else:
            behavior = Behavior(rng.choice(4, p=BEHAVIOR_PROBS))
            speed = float(rng.uniform(0.0, self.cfg.target_max_speed))
            dwell = max(1, int(round(rng.uniform(*DWELL_RANGE) / self.cfg.dt)))
            target = TargetState(np.zeros(3), heading, speed, behavior, dwell)

        yaw = heading + delta
        view = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        ground_range = altitude / math.tan(pitch)
        # place the target `start_offset` ahead of the default center
        # projection, then slide the drone so the target sits exactly on it
        pre = target.position - (ground_range + start_offset) * view
        drone_xy = pre + start_offset * view
        drone = DroneState(
            np.array([drone_xy[0], drone_xy[1], altitude]), float(yaw), pitch
        )
        self.state = WorldState(drone, target)

        self._steps = 0
        self._lost_streak = 0
        self._done = False
        self._occlusion_left = 0
        self._prev_action: Action | None = None
        self._last_uv = (0.0, 0.0)
        self._trace = []

        frame = self._sense()
        self._frames = deque([frame] * FRAME_STACK, maxlen=FRAME_STACK)
        return self.state, self.observe()

    def _pose_frame(self, inv: RigidTransform) -> tuple[QuadFrame, np.ndarray]:
        """QuadFrame for the current pose plus the target in camera coords."""
        ground_cam = plane_in_frame(self._ground, inv)
        proj = project_frustum(self.intr, ground_cam)
        return QuadFrame(proj, self.reward_cfg.lambda_clip), inv.apply(self.state.target.position)

    def _sense(self, inv: RigidTransform | None = None) -> np.ndarray:
        """Project the target and build one observation frame."""
        if inv is None:
            inv = camera_pose(self.state.drone).inverse()
        p_cam = inv.apply(self.state.target.position)
        occluded = False
        if self.phase == 2 and self._steps > 0:
            if self._occlusion_left > 0:
                self._occlusion_left -= 1
                occluded = True
            elif self._rng.random() < OCCLUSION_PROB:
                self._occlusion_left = int(self._rng.integers(OCCLUSION_STEPS[0], OCCLUSION_STEPS[1] + 1)) - 1
                occluded = True
        try:
            u, v, visible = project_to_image(self.intr, p_cam)
        except BehindCamera:
            u, v, visible = 0.0, 0.0, False
        visible = visible and not occluded
        self._last_visible = visible
        if visible:
            self._last_uv = (
                float(np.clip(u / (self.intr.width / 2.0), -1.0, 1.0)),
                float(np.clip(v / (self.intr.height / 2.0), -1.0, 1.0)),
            )
        if self.obs_mode == "grid":
            frame = np.zeros(GRID_SIZE * GRID_SIZE)
            if visible:
                gx = min(GRID_SIZE - 1, int((self._last_uv[0] + 1.0) / 2.0 * GRID_SIZE))
                gz = min(GRID_SIZE - 1, int((self._last_uv[1] + 1.0) / 2.0 * GRID_SIZE))
                frame[gz * GRID_SIZE + gx] = 1.0
            return frame
        frame = np.zeros(self.frame_length)
        frame[0], frame[1] = self._last_uv
        frame[2] = 1.0 if visible else 0.0
        frame[3] = (self.state.drone.position[2] - ALTITUDE_RANGE[0]) / (
            ALTITUDE_RANGE[1] - ALTITUDE_RANGE[0]
        )
        frame[4] = (self.state.drone.gimbal_pitch - PITCH_RANGE[0]) / (
            PITCH_RANGE[1] - PITCH_RANGE[0]
        )
        if self._prev_action is not None:
            frame[5 + int(self._prev_action)] = 1.0
        return frame

    def observe(self) -> np.ndarray:
        """Stacked last-four observation frames, oldest first."""
        return np.concatenate(list(self._frames))

    def step(self, action):
        if self._done:
            raise StepAfterDone("episode is finished; call reset()")
        action = Action(int(action))
        cfg = self.cfg
        drone = self.state.drone
        yaw, pos = drone.yaw, drone.position
        cy, sy = math.cos(yaw), math.sin(yaw)
        move = cfg.drone_speed * cfg.dt
        if action == Action.FORWARD:
            pos = pos + move * np.array([cy, sy, 0.0])
        elif action == Action.BACKWARD:
            pos = pos - move * np.array([cy, sy, 0.0])
        elif action == Action.LEFTWARD:
            pos = pos + move * np.array([-sy, cy, 0.0])
        elif action == Action.RIGHTWARD:
            pos = pos - move * np.array([-sy, cy, 0.0])
        elif action == Action.TURN_LEFT:
            yaw += cfg.drone_yaw_rate * cfg.dt
        elif action == Action.TURN_RIGHT:
            yaw -= cfg.drone_yaw_rate * cfg.dt
        drone = replace(drone, position=pos, yaw=yaw)
        target = target_update(
            self.state.target, self.phase, cfg.dt, self._rng, cfg.target_max_speed
        )
        self.state = WorldState(drone, target)

        inv = camera_pose(drone).inverse()
        frame, p_cam = self._pose_frame(inv)
        q = frame.to_plane(p_cam)
        phi = float(frame.phi(q)[0])
        r_gc = (
            math.tanh(self.reward_cfg.alpha * (1.0 - phi) ** 3)
            if frame.in_clip(q)[0]
            else 0.0
        )
        r_dt = 1.0 if frame.in_quad(q)[0] else 0.0
        r_distance = max(0.0, 1.0 - float(np.linalg.norm(q[0])) / frame.max_offset)

        self._steps += 1
        self._lost_streak = 0 if r_dt > 0 else self._lost_streak + 1
        reason = None
        if self._lost_streak >= cfg.lost_threshold:
            reason = "lost"
        elif self._steps >= cfg.max_steps:
            reason = "max_steps"
        self._done = reason is not None

        self._prev_action = action
        self._frames.append(self._sense(inv))

        self._trace.append(
            (
                self._steps,
                drone.position[0],
                drone.position[1],
                drone.yaw,
                target.position[0],
                target.position[1],
                phi,
                r_gc,
                r_dt,
                int(action),
            )
        )
        info = {
            "phi": phi,
            "r_distance": r_distance,
            "visible": self._last_visible,
            "reason": reason,
            "step": self._steps,
        }
        return self.state, r_gc, r_dt, self._done, info

    def export_trace(self, path) -> None:
        """Write the current episode trace as CSV."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["step", "drone_x", "drone_y", "yaw", "target_x", "target_y", "phi", "r_gc", "r_dt", "action"]
            )
            w.writerows(self._trace)

    @property
    def trace(self) -> list[tuple]:
        return list(self._trace)

"""Grasp detection and asset-pose source arbitration.

A grasp is detected when the fingers stall during the closing action
before reaching complete closure. While grasped the asset rides rigidly
on the gripper link; on release it returns to mocap tracking, or to a
point-mass physics fallback while tracking is unavailable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose
from .mocap import FilteredPose, PoseStatus

GRAVITY = 9.81


class GraspPhase(enum.Enum):
    IDLE = "idle"
    CLOSING = "closing"
    GRASPED = "grasped"


class AssetSource(enum.Enum):
    MOCAP = "mocap"
    GRIPPER_ATTACHED = "gripper_attached"
    PHYSICS_FALLBACK = "physics_fallback"


@dataclass(frozen=True)
class GraspConfig:
    stall_eps: float = 1e-3      # m/s
    stall_count: int = 5
    closed_threshold: float = 1e-3  # m
    release_eps: float = 2e-3    # m

    def __post_init__(self):
        if min(self.stall_eps, self.closed_threshold, self.release_eps) <= 0 \
                or self.stall_count <= 0:
            raise ValueError("grasp config values must be strictly positive")


class GripperTracker:
    """Finger-width state machine: Idle -> Closing -> {Grasped, Idle}."""

    def __init__(self, config: GraspConfig | None = None):
        self.config = config or GraspConfig()
        self.phase = GraspPhase.IDLE
        self._stall = 0
        self.grasp_width: float | None = None

    def step(self, width: float, d_width: float) -> GraspPhase:
        if not (np.isfinite(width) and np.isfinite(d_width)):
            raise ValueError("non-finite gripper sample")
        if width < 0:
            raise ValueError("width must be >= 0")
        c = self.config
        if self.phase == GraspPhase.IDLE:
            if d_width < -c.stall_eps:
                self.phase = GraspPhase.CLOSING
                self._stall = 0
        elif self.phase == GraspPhase.CLOSING:
            if abs(d_width) < c.stall_eps:
                if width <= c.closed_threshold:
                    # fully closed without resistance: nothing grasped
                    self.phase = GraspPhase.IDLE
                    self._stall = 0
                else:
                    self._stall += 1
                    if self._stall >= c.stall_count:
                        self.phase = GraspPhase.GRASPED
                        self.grasp_width = width
            elif d_width > c.stall_eps:
                # fingers opening again: closing aborted
                self.phase = GraspPhase.IDLE
                self._stall = 0
            else:
                self._stall = 0
        elif self.phase == GraspPhase.GRASPED:
            if self.grasp_width is not None and width > self.grasp_width + c.release_eps:
                self.phase = GraspPhase.IDLE
                self._stall = 0
                self.grasp_width = None
        return self.phase


@dataclass(frozen=True)
class FallbackState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("non-finite fallback state")


def fallback_step(state: FallbackState, dt: float,
                  up_axis: np.ndarray = np.array([0.0, 0.0, 1.0]),
                  ground_height: float = 0.0) -> FallbackState:
    """Point mass under gravity with a resting ground plane.

    Constant-acceleration step (exact for free fall):
    p += v*dt - g*dt^2/2 * up, v -= g*dt * up.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    up = np.asarray(up_axis, dtype=float)
    up = up / np.linalg.norm(up)
    p = state.position + state.velocity * dt - 0.5 * GRAVITY * dt * dt * up
    v = state.velocity - GRAVITY * dt * up
    height = np.dot(p, up)
    if height < ground_height:
        p = p + (ground_height - height) * up
        v = np.zeros(3)
    return FallbackState(p, v)


class AssetTracker:
    """Arbitrates the pose source for one asset.

    Priority: grasped -> rigid gripper attachment; else stable mocap;
    else physics fallback. Every source switch anchors the new source at
    the last emitted position (a decaying handover offset), so the
    emitted position is continuous at the switching instant.
    """

    def __init__(self, name: str, initial_pose: Pose,
                 up_axis: np.ndarray = np.array([0.0, 0.0, 1.0]),
                 ground_height: float = 0.0, blend_decay: float = 0.8):
        self.name = name
        self.up_axis = np.asarray(up_axis, dtype=float)
        self.ground_height = ground_height
        self.blend_decay = blend_decay
        self.source = AssetSource.MOCAP
        self.pose = initial_pose
        self._prev_pose = initial_pose
        self._attach_offset: Pose | None = None
        self._fallback: FallbackState | None = None
        self._blend = np.zeros(3)

    def _velocity_estimate(self, dt: float) -> np.ndarray:
        if dt <= 0:
            return np.zeros(3)
        return (self.pose.translation - self._prev_pose.translation) / dt

    def update(self, grasped: bool, gripper_pose: Pose,
               mocap: FilteredPose | None, dt: float) -> tuple[Pose, AssetSource]:
        """Advance one twin tick and return the arbitrated pose."""
        mocap_ok = mocap is not None and mocap.status in (PoseStatus.STABLE,
                                                          PoseStatus.RELOCATED)
        if grasped:
            desired = AssetSource.GRIPPER_ATTACHED
        elif mocap_ok:
            desired = AssetSource.MOCAP
        else:
            desired = AssetSource.PHYSICS_FALLBACK

        switching = desired is not self.source
        if switching:
            if desired is AssetSource.GRIPPER_ATTACHED:
                # capture the rigid offset at the current pose: continuous
                self._attach_offset = gripper_pose.inverse().compose(self.pose)
            elif desired is AssetSource.PHYSICS_FALLBACK:
                self._fallback = FallbackState(self.pose.translation,
                                               self._velocity_estimate(dt))
            else:  # MOCAP takeover: decaying offset bridges any residual gap
                self._blend = self.pose.translation - mocap.position
            self.source = desired

        self._prev_pose = self.pose
        if self.source is AssetSource.GRIPPER_ATTACHED:
            new = gripper_pose.compose(self._attach_offset)
        elif self.source is AssetSource.MOCAP:
            if not switching:
                self._blend = self._blend * self.blend_decay
                if np.linalg.norm(self._blend) < 1e-12:
                    self._blend = np.zeros(3)
            new = Pose(mocap.position + self._blend, mocap.rotation)
        else:
            if not switching:
                self._fallback = fallback_step(self._fallback, dt,
                                               self.up_axis, self.ground_height)
            new = Pose(self._fallback.position, self.pose.rotation)
        self.pose = new
        return new, self.source

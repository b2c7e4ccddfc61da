"""Simulated leader-follower teleoperation at 1 kHz.

The leader is a trajectory source (sinusoid or scripted steps); the
follower runs a per-joint PD impedance law over unit inertia, integrated
with semi-implicit Euler. External joint torques on the follower are
reported back as force feedback for the leader.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .network import DatagramLink, LinkConfig, Throttle
from .robot import JointState
from .wire import TelemetryPacket, encode_telemetry

TICK_NS = 1_000_000  # 1 kHz control rate


@dataclass(frozen=True)
class ControllerGains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kp", np.asarray(self.kp, dtype=float))
        object.__setattr__(self, "kd", np.asarray(self.kd, dtype=float))
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be >= 0")

    @staticmethod
    def default(dof: int, kp: float = 100.0, kd: float = 20.0) -> "ControllerGains":
        return ControllerGains(np.full(dof, kp), np.full(dof, kd))


@dataclass(frozen=True)
class FollowerState:
    q: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "dq", np.asarray(self.dq, dtype=float))


@dataclass(frozen=True)
class LeaderProfile:
    """Per-joint sinusoids plus an optional scripted gripper-width schedule.

    q_i(t) = center_i + amplitude_i * sin(2*pi*freq_i*t + phase_i)
    gripper_schedule: sorted (t_s, width_m) steps, piecewise constant.
    """

    centers: np.ndarray
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    gripper_schedule: tuple = ((0.0, 0.08),)

    def __post_init__(self):
        for name in ("centers", "amplitudes", "frequencies", "phases"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.centers)
        for name in ("amplitudes", "frequencies", "phases"):
            if len(getattr(self, name)) != n:
                raise ValueError("profile arrays must have equal length")

    @staticmethod
    def constant(q, gripper_schedule=((0.0, 0.08),)) -> "LeaderProfile":
        q = np.asarray(q, dtype=float)
        z = np.zeros_like(q)
        return LeaderProfile(q, z, z, z, gripper_schedule)

    def validate_against_limits(self, lowers, uppers) -> None:
        lo = self.centers - np.abs(self.amplitudes)
        hi = self.centers + np.abs(self.amplitudes)
        if np.any(lo < np.asarray(lowers)) or np.any(hi > np.asarray(uppers)):
            raise ValueError("leader profile amplitude exceeds joint limits")

    def gripper_at(self, t: float) -> float:
        width = self.gripper_schedule[0][1]
        for ts, w in self.gripper_schedule:
            if t >= ts:
                width = w
            else:
                break
        return width


def leader_trajectory(t: float, profile: LeaderProfile) -> JointState:
    """Leader joint state at time t (analytic position and velocity)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w = 2.0 * np.pi * profile.frequencies
    q = profile.centers + profile.amplitudes * np.sin(w * t + profile.phases)
    dq = profile.amplitudes * w * np.cos(w * t + profile.phases)
    width = profile.gripper_at(t)
    prev_width = profile.gripper_at(max(0.0, t - 1e-3))
    return JointState(int(round(t * 1e9)), q, dq, np.zeros_like(q),
                      width, (width - prev_width) / 1e-3)


def pd_step(leader: JointState, follower: FollowerState, gains: ControllerGains,
            ext_torque: np.ndarray, dt: float = 1e-3) -> tuple[np.ndarray, FollowerState]:
    """One PD impedance step over unit inertia (semi-implicit Euler)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ext_torque = np.asarray(ext_torque, dtype=float)
    if not (len(leader.positions) == len(follower.q) == len(gains.kp) == len(ext_torque)):
        raise ValueError("dimension mismatch")
    if not (np.all(np.isfinite(leader.positions)) and np.all(np.isfinite(follower.q))
            and np.all(np.isfinite(ext_torque))):
        raise ValueError("non-finite input")
    tau = gains.kp * (leader.positions - follower.q) \
        + gains.kd * (leader.velocities - follower.dq) + ext_torque
    dq = follower.dq + tau * dt
    q = follower.q + dq * dt
    return tau, FollowerState(q, dq)


def force_feedback(ext_torque: np.ndarray) -> np.ndarray:
    """Follower external joint torque, reported for application at the leader."""
    ext_torque = np.asarray(ext_torque, dtype=float)
    if not np.all(np.isfinite(ext_torque)):
        raise ValueError("non-finite wrench")
    return ext_torque.copy()


@dataclass
class TeleopTrace:
    times_ns: list = field(default_factory=list)
    leader_q: list = field(default_factory=list)
    follower_q: list = field(default_factory=list)
    follower_dq: list = field(default_factory=list)
    telemetry_sent: list = field(default_factory=list)   # (time_ns, bytes)
    telemetry_delivered: list = field(default_factory=list)  # Delivery

    def hash(self) -> str:
        h = hashlib.sha256()
        for t, lq, fq in zip(self.times_ns, self.leader_q, self.follower_q):
            h.update(t.to_bytes(8, "little"))
            h.update(np.asarray(lq).tobytes())
            h.update(np.asarray(fq).tobytes())
        for t, b in self.telemetry_sent:
            h.update(t.to_bytes(8, "little"))
            h.update(b)
        return h.hexdigest()


def run_teleop(duration_s: float, telemetry_link: LinkConfig, gains: ControllerGains,
               profile: LeaderProfile, robot_id: int = 0,
               follower0: FollowerState | None = None,
               throttle_hz: int = 60) -> TeleopTrace:
    """Run the 1 kHz leader/follower loop, publishing throttled telemetry.

    Telemetry flows through the keep-latest throttler, then the datagram
    link; deliveries are polled once per control tick.
    """
    if duration_s < 0:
        raise ValueError("duration must be >= 0")
    dof = len(profile.centers)
    follower = follower0 or FollowerState(leader_trajectory(0.0, profile).positions,
                                          np.zeros(dof))
    throttle = Throttle(target_hz=throttle_hz)
    link = DatagramLink(telemetry_link)
    trace = TeleopTrace()
    seq = 0
    ticks = int(round(duration_s * 1000))
    for k in range(ticks):
        t_ns = k * TICK_NS
        leader = leader_trajectory(t_ns / 1e9, profile)
        tau, follower = pd_step(leader, follower, gains, np.zeros(dof))
        trace.times_ns.append(t_ns)
        trace.leader_q.append(leader.positions.copy())
        trace.follower_q.append(follower.q.copy())
        trace.follower_dq.append(follower.dq.copy())
        sample = TelemetryPacket(robot_id, seq, t_ns, follower.q, follower.dq,
                                 tau, leader.gripper_width, leader.gripper_velocity)
        seq += 1
        for tick_time, pkt in throttle.offer(t_ns, sample):
            data = encode_telemetry(pkt)
            trace.telemetry_sent.append((tick_time, data))
            link.send(tick_time, data)
        trace.telemetry_delivered.extend(link.poll(t_ns))
    trace.telemetry_delivered.extend(link.poll(ticks * TICK_NS + 10**12))
    return trace

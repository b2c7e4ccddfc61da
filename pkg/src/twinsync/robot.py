"""URDF-subset parsing and forward kinematics over the kinematic tree.

Only the elements needed to mirror joint states are read: links with an
optional visual mesh path, and joints with origin, axis, limits and the
parent/child wiring. Collision, transmission and vendor extensions are
ignored.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_from_axis_angle

MOVABLE_KINDS = ("revolute", "prismatic")
SUPPORTED_KINDS = MOVABLE_KINDS + ("fixed",)


class UrdfError(ValueError):
    """Raised for malformed or structurally invalid robot descriptions."""


@dataclass(frozen=True)
class Link:
    name: str
    visual: str | None = None


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str
    parent: str
    child: str
    origin: Pose
    axis: np.ndarray | None = None  # unit vector, None for fixed joints
    lower: float = 0.0
    upper: float = 0.0


@dataclass(frozen=True)
class RobotModel:
    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]
    root: str

    @property
    def movable_joints(self) -> list[Joint]:
        return [j for j in self.joints if j.kind in MOVABLE_KINDS]

    @property
    def dof(self) -> int:
        return len(self.movable_joints)

    def link(self, name: str) -> Link:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(name)


@dataclass(frozen=True)
class JointState:
    """One sensor sample: per movable joint plus the gripper channel."""

    time_ns: int
    positions: np.ndarray
    velocities: np.ndarray
    efforts: np.ndarray
    gripper_width: float = 0.0
    gripper_velocity: float = 0.0

    def __post_init__(self):
        for name in ("positions", "velocities", "efforts"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.positions)
        if len(self.velocities) != n or len(self.efforts) != n:
            raise ValueError("positions/velocities/efforts length mismatch")
        if self.gripper_width < 0:
            raise ValueError("gripper_width must be >= 0")


def _parse_floats(text: str, n: int, what: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise UrdfError(f"expected {n} values in {what}, got {text!r}")
    return np.array([float(p) for p in parts])


def _origin_pose(elem) -> Pose:
    origin = elem.find("origin")
    xyz = np.zeros(3)
    rpy = np.zeros(3)
    if origin is not None:
        if origin.get("xyz"):
            xyz = _parse_floats(origin.get("xyz"), 3, "origin xyz")
        if origin.get("rpy"):
            rpy = _parse_floats(origin.get("rpy"), 3, "origin rpy")
    return Pose.from_rpy(xyz, rpy)


def parse_urdf(xml_text: str) -> RobotModel:
    """Parse the supported URDF subset into a validated kinematic tree."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise UrdfError(f"malformed XML: {e}") from e
    if root.tag != "robot":
        raise UrdfError(f"expected <robot> root element, got <{root.tag}>")

    links: list[Link] = []
    seen_links: set[str] = set()
    for el in root.findall("link"):
        name = el.get("name")
        if not name:
            raise UrdfError("link without name")
        if name in seen_links:
            raise UrdfError(f"duplicate link name {name!r}")
        seen_links.add(name)
        visual = None
        mesh = el.find("./visual/geometry/mesh")
        if mesh is not None:
            visual = mesh.get("filename")
        links.append(Link(name, visual))
    if not links:
        raise UrdfError("robot has no links")

    joints: list[Joint] = []
    seen_joints: set[str] = set()
    child_of: dict[str, str] = {}
    for el in root.findall("joint"):
        name = el.get("name")
        kind = el.get("type")
        if not name:
            raise UrdfError("joint without name")
        if name in seen_joints:
            raise UrdfError(f"duplicate joint name {name!r}")
        seen_joints.add(name)
        if kind not in SUPPORTED_KINDS:
            # continuous etc. are outside the supported subset
            raise UrdfError(f"unsupported joint type {kind!r} on {name!r}")
        parent_el = el.find("parent")
        child_el = el.find("child")
        if parent_el is None or child_el is None:
            raise UrdfError(f"joint {name!r} missing parent or child")
        parent, child = parent_el.get("link"), child_el.get("link")
        if parent not in seen_links:
            raise UrdfError(f"joint {name!r} references unknown parent link {parent!r}")
        if child not in seen_links:
            raise UrdfError(f"joint {name!r} references unknown child link {child!r}")
        if child in child_of:
            raise UrdfError(f"link {child!r} has multiple parent joints")
        child_of[child] = name

        axis = None
        lower = upper = 0.0
        if kind in MOVABLE_KINDS:
            axis_el = el.find("axis")
            axis = _parse_floats(axis_el.get("xyz"), 3, "axis") if axis_el is not None \
                else np.array([1.0, 0.0, 0.0])
            norm = np.linalg.norm(axis)
            if norm < 1e-12:
                raise UrdfError(f"zero-length axis on joint {name!r}")
            axis = axis / norm
            limit_el = el.find("limit")
            if limit_el is not None:
                lower = float(limit_el.get("lower", 0.0))
                upper = float(limit_el.get("upper", 0.0))
            if lower > upper:
                raise UrdfError(f"joint {name!r} has lower > upper limit")
        joints.append(Joint(name, kind, parent, child, _origin_pose(el), axis, lower, upper))

    roots = [l.name for l in links if l.name not in child_of]
    if len(roots) != 1:
        raise UrdfError(f"expected exactly one root link, found {roots}")

    # reachability check catches disconnected subtrees and cycles
    children: dict[str, list[str]] = {}
    for j in joints:
        children.setdefault(j.parent, []).append(j.child)
    reached = set()
    stack = [roots[0]]
    while stack:
        n = stack.pop()
        if n in reached:
            raise UrdfError("cycle in joint graph")
        reached.add(n)
        stack.extend(children.get(n, []))
    if reached != seen_links:
        raise UrdfError(f"links unreachable from root: {sorted(seen_links - reached)}")

    return RobotModel(root.get("name", ""), tuple(links), tuple(joints), roots[0])


def _joint_motion(joint: Joint, position: float) -> Pose:
    if joint.kind == "revolute":
        return Pose(np.zeros(3), quat_from_axis_angle(joint.axis, position))
    if joint.kind == "prismatic":
        return Pose(joint.axis * position)
    return Pose.identity()


def forward_kinematics(model: RobotModel, positions,
                       base_pose: Pose | None = None) -> dict[str, Pose]:
    """Link poses for the given movable-joint positions.

    Child pose = parent pose o joint origin o joint motion. The root link
    takes ``base_pose`` (identity by default).
    """
    positions = np.asarray(positions, dtype=float)
    movable = model.movable_joints
    if len(positions) != len(movable):
        raise ValueError(f"expected {len(movable)} positions, got {len(positions)}")
    if not np.all(np.isfinite(positions)):
        raise ValueError("non-finite joint position")
    pos_of = {j.name: positions[i] for i, j in enumerate(movable)}

    poses: dict[str, Pose] = {model.root: base_pose or Pose.identity()}
    joints_of: dict[str, list[Joint]] = {}
    for j in model.joints:
        joints_of.setdefault(j.parent, []).append(j)
    stack = [model.root]
    while stack:
        parent = stack.pop()
        for j in joints_of.get(parent, []):
            motion = _joint_motion(j, pos_of.get(j.name, 0.0))
            poses[j.child] = poses[parent].compose(j.origin).compose(motion)
            stack.append(j.child)
    return poses


@dataclass(frozen=True)
class LimitViolation:
    joint: str
    value: float
    lower: float
    upper: float
    clamped: bool


def apply_joint_state(model: RobotModel, state: JointState,
                      clamp: bool = True) -> tuple[np.ndarray, list[LimitViolation]]:
    """Map a joint-state sample onto per-joint positions, checking limits.

    No interpolation between frames is performed; the sample is applied
    as-is. Out-of-limit joints are clamped (if ``clamp``) and reported.
    """
    movable = model.movable_joints
    if len(state.positions) != len(movable):
        raise ValueError(f"expected {len(movable)} positions, got {len(state.positions)}")
    if not (np.all(np.isfinite(state.positions)) and np.all(np.isfinite(state.velocities))):
        raise ValueError("non-finite joint state")
    out = state.positions.copy()
    report: list[LimitViolation] = []
    for i, j in enumerate(movable):
        if out[i] < j.lower or out[i] > j.upper:
            report.append(LimitViolation(j.name, out[i], j.lower, j.upper, clamp))
            if clamp:
                out[i] = min(max(out[i], j.lower), j.upper)
    return out, report


def gripper_width_to_fingers(width: float) -> tuple[float, float]:
    """Split the published gripper width onto the two symmetric finger joints."""
    if width < 0:
        raise ValueError("gripper width must be >= 0")
    return width / 2.0, width / 2.0

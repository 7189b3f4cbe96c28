"""Serial revolute chains and world-frame placement of their collision shapes.

A robot is a base pose followed by revolute joints, each defined by a fixed
rigid offset from its parent frame and a rotation axis. Collision geometry
(capsules or spheres) is attached to joint frames and placed by forward
kinematics. All placement code is batched over configurations; the scalar
API wraps the batch path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, JointLimitViolation
from .geometry import Capsule, PlacedPrimitive, Shape, Sphere, segment_of

# Interpolated states may overshoot a limit by rounding; FK tolerates this much.
_LIMIT_SLACK = 1e-9


def rotation_about_axis(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation matrix; `angle` may be a scalar or an array."""
    a = np.asarray(axis, dtype=float)
    th = np.asarray(angle, dtype=float)
    k = np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )
    outer = np.outer(a, a)
    c = np.cos(th)[..., None, None]
    s = np.sin(th)[..., None, None]
    return c * np.eye(3) + s * k + (1.0 - c) * outer


def rpy_matrix(rpy) -> np.ndarray:
    """Rotation from roll-pitch-yaw (extrinsic x-y-z, i.e. Rz @ Ry @ Rx)."""
    r, p, y = (float(v) for v in rpy)
    rx = rotation_about_axis([1.0, 0.0, 0.0], r)
    ry = rotation_about_axis([0.0, 1.0, 0.0], p)
    rz = rotation_about_axis([0.0, 0.0, 1.0], y)
    return rz @ ry @ rx


def pose(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous 4x4 transform from a translation and roll-pitch-yaw."""
    m = np.eye(4)
    m[:3, :3] = rpy_matrix(rpy)
    m[:3, 3] = np.asarray(xyz, dtype=float)
    return m


@dataclass(frozen=True, eq=False)
class JointSpec:
    """One revolute joint: fixed offset from the parent frame, then rotation."""

    axis: np.ndarray
    origin_offset: np.ndarray  # 4x4 rigid transform, applied before the rotation
    position_limits: tuple[float, float]

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,):
            raise ValueError("joint axis must be a 3-vector")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must have unit norm")
        origin = np.asarray(self.origin_offset, dtype=float)
        if origin.shape != (4, 4):
            raise ValueError("origin_offset must be a 4x4 transform")
        lo, hi = (float(v) for v in self.position_limits)
        if lo > hi:
            raise ValueError("position limits must satisfy lo <= hi")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin_offset", origin)
        object.__setattr__(self, "position_limits", (lo, hi))

    @classmethod
    def from_xyz_rpy(cls, axis, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0), limits=(-np.pi, np.pi)):
        return cls(axis=axis, origin_offset=pose(xyz, rpy), position_limits=tuple(limits))


@dataclass(frozen=True, eq=False)
class LinkGeometry:
    """A collision shape expressed in the frame of joint `frame`."""

    frame: int
    shape: Shape


@dataclass(frozen=True, eq=False)
class JointState:
    group_id: str
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1))


@dataclass(eq=False)
class RobotModel:
    """A serial chain plus its collision capsules and self-collision exemptions.

    `allowed_pairs` lists link-index pairs exempt from self-collision checks.
    Pairs of links that are adjacent (consecutive in the links list, or
    attached to the same joint frame) are always added automatically, since
    chained capsules touch by construction.

    `max_cartesian_speed_bound` is a conservative upper bound on the speed of
    any point of any placed primitive while every joint respects its velocity
    limit. It is computed as sum_j vlim_j * reach_j with reach_j a triangle
    -inequality bound on the distance from joint j's origin to the farthest
    distal surface point.
    """

    group_id: str
    base_pose: np.ndarray
    joints: list[JointSpec]
    links: list[LinkGeometry]
    joint_velocity_limits: np.ndarray
    allowed_pairs: set[tuple[int, int]] = field(default_factory=set)
    max_cartesian_speed_bound: float = field(init=False)

    def __post_init__(self):
        self.base_pose = np.asarray(self.base_pose, dtype=float)
        if self.base_pose.shape != (4, 4):
            raise ValueError("base_pose must be a 4x4 transform")
        self.joint_velocity_limits = np.asarray(self.joint_velocity_limits, dtype=float).reshape(-1)
        if len(self.joint_velocity_limits) != len(self.joints):
            raise ValueError("need one velocity limit per joint")
        if not np.all(self.joint_velocity_limits > 0.0):
            raise ValueError("velocity limits must be > 0")
        for link in self.links:
            if not 0 <= link.frame < len(self.joints):
                raise ValueError(f"link frame {link.frame} out of range")

        self.allowed_pairs = {tuple(sorted(p)) for p in self.allowed_pairs}
        for i, j in self.allowed_pairs:
            if not (0 <= i < len(self.links) and 0 <= j < len(self.links)):
                raise ValueError(f"allowed pair ({i},{j}) out of range")
        self.allowed_pairs |= self._adjacent_pairs()

        # cached arrays for the batch FK path
        self._axes = np.array([j.axis for j in self.joints]).reshape(-1, 3)
        self._r_off = np.array([j.origin_offset[:3, :3] for j in self.joints]).reshape(-1, 3, 3)
        self._t_off = np.array([j.origin_offset[:3, 3] for j in self.joints]).reshape(-1, 3)
        self._lo = np.array([j.position_limits[0] for j in self.joints])
        self._hi = np.array([j.position_limits[1] for j in self.joints])
        segs = [segment_of(link.shape) for link in self.links]
        self._local_p0 = np.array([s[0] for s in segs]).reshape(-1, 3)
        self._local_p1 = np.array([s[1] for s in segs]).reshape(-1, 3)
        self._radii = np.array([s[2] for s in segs]).reshape(-1)
        self._frames = np.array([link.frame for link in self.links], dtype=int)

        self.max_cartesian_speed_bound = self._speed_bound()

    def _adjacent_pairs(self) -> set[tuple[int, int]]:
        pairs = set()
        order = sorted(range(len(self.links)), key=lambda i: (self.links[i].frame, i))
        for a, b in zip(order, order[1:]):
            pairs.add(tuple(sorted((a, b))))
        for i in range(len(self.links)):
            for j in range(i + 1, len(self.links)):
                if self.links[i].frame == self.links[j].frame:
                    pairs.add((i, j))
        return pairs

    def _speed_bound(self) -> float:
        if not self.links:
            return 0.0
        far = np.maximum(
            np.linalg.norm(self._local_p0, axis=1), np.linalg.norm(self._local_p1, axis=1)
        ) + self._radii
        offsets = np.linalg.norm(self._t_off, axis=1)
        bound = 0.0
        for j in range(len(self.joints)):
            reach = 0.0
            for k, link in enumerate(self.links):
                if link.frame < j:
                    continue
                reach = max(reach, offsets[j + 1 : link.frame + 1].sum() + far[k])
            bound += float(self.joint_velocity_limits[j]) * reach
        return float(bound)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def owners(self) -> list[tuple[str, int]]:
        return [(self.group_id, i) for i in range(len(self.links))]


def _check_dimension(model: RobotModel, q: JointState) -> np.ndarray:
    positions = q.positions
    if positions.shape != (model.n_joints,):
        raise DimensionMismatch(
            f"{model.group_id}: expected {model.n_joints} joint values, got {positions.shape}"
        )
    return positions


def within_limits(model: RobotModel, q: JointState, tol: float = 0.0) -> bool:
    """True iff every coordinate lies in its closed limit interval."""
    positions = _check_dimension(model, q)
    return bool(np.all(positions >= model._lo - tol) and np.all(positions <= model._hi + tol))


def joint_frames(model: RobotModel, q_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World rotation (n,J,3,3) and origin (n,J,3) of every joint frame."""
    q_batch = np.asarray(q_batch, dtype=float)
    n = q_batch.shape[0]
    rot = np.broadcast_to(model.base_pose[:3, :3], (n, 3, 3))
    trans = np.broadcast_to(model.base_pose[:3, 3], (n, 3))
    rots = np.empty((n, model.n_joints, 3, 3))
    origins = np.empty((n, model.n_joints, 3))
    for j in range(model.n_joints):
        trans = trans + np.einsum("nij,j->ni", rot, model._t_off[j])
        rot = rot @ model._r_off[j] @ rotation_about_axis(model._axes[j], q_batch[:, j])
        rots[:, j] = rot
        origins[:, j] = trans
    return rots, origins


def placed_segments(model: RobotModel, q_batch: np.ndarray):
    """World endpoints of every link primitive for a batch of configurations.

    Returns (p0, p1, radii) with shapes (n, L, 3), (n, L, 3), (L,). No limit
    checking happens here; callers validate states first.
    """
    rots, origins = joint_frames(model, q_batch)
    r = rots[:, model._frames]          # (n, L, 3, 3)
    t = origins[:, model._frames]       # (n, L, 3)
    p0 = t + np.einsum("nlij,lj->nli", r, model._local_p0)
    p1 = t + np.einsum("nlij,lj->nli", r, model._local_p1)
    return p0, p1, model._radii


def forward_kinematics(model: RobotModel, q: JointState) -> list[PlacedPrimitive]:
    """World-frame placement of every link primitive at configuration q."""
    positions = _check_dimension(model, q)
    if not within_limits(model, q, tol=_LIMIT_SLACK):
        raise JointLimitViolation(f"{model.group_id}: configuration outside joint limits")
    p0, p1, radii = placed_segments(model, positions[None, :])
    placed = []
    for i, link in enumerate(model.links):
        if isinstance(link.shape, Sphere):
            shape: Shape = Sphere(center=p0[0, i], radius=float(radii[i]))
        else:
            shape = Capsule(p0=p0[0, i], p1=p1[0, i], radius=float(radii[i]))
        placed.append(PlacedPrimitive(shape=shape, owner=(model.group_id, i)))
    return placed

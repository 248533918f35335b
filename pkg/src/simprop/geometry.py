"""Poses, coordinate frames and axis-aligned bounding boxes.

Everything here is an immutable value; operations are pure functions.
Orientation is yaw-only: the simulated world never needs full SO(3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

WORLD_FRAME = "map"


class FrameError(ValueError):
    """A coordinate frame could not be resolved."""


class PlacementError(ValueError):
    """A pose does not rest on the requested support surface."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, math.tau)
    if w <= -math.pi:
        w += math.tau
    return w


def yaw_difference(a: float, b: float) -> float:
    """Signed minimal difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose:
    """Position in meters plus yaw in radians, in some named frame."""

    x: float
    y: float
    z: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.z, self.yaw):
            if not math.isfinite(v):
                raise ValueError(f"non-finite pose component: {v!r}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def compose(self, local: Pose) -> Pose:
        """Express `local` (given in this pose's frame) in the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.z + local.z,
            self.yaw + local.yaw,
        )

    def inverse(self) -> Pose:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.z,
            -self.yaw,
        )

    def planar_distance(self, other: Pose) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def distance(self, other: Pose) -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by min/max corners in the world frame."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        for lo, hi in zip(self.min_corner, self.max_corner):
            if lo > hi:
                raise ValueError(f"inverted AABB: {self.min_corner} > {self.max_corner}")

    @classmethod
    def from_center(cls, cx: float, cy: float, cz: float, hx: float, hy: float, hz: float) -> Aabb:
        return cls((cx - hx, cy - hy, cz - hz), (cx + hx, cy + hy, cz + hz))

    def inflated(self, margin: float) -> Aabb:
        lo = tuple(v - margin for v in self.min_corner)
        hi = tuple(v + margin for v in self.max_corner)
        return Aabb(lo, hi)

    def contains_xy(self, x: float, y: float) -> bool:
        return (
            self.min_corner[0] <= x <= self.max_corner[0]
            and self.min_corner[1] <= y <= self.max_corner[1]
        )


def aabb_intersects(a: Aabb, b: Aabb) -> bool:
    """Closed-interval overlap on all three axes (face contact counts).

    Conservative on purpose: the spawn generator rejects touching boxes.
    """
    for i in range(3):
        if a.max_corner[i] < b.min_corner[i] or b.max_corner[i] < a.min_corner[i]:
            return False
    return True


def box_world_aabb(pose: Pose, half_extents: tuple[float, float, float]) -> Aabb:
    """World AABB of a yaw-rotated box centred at `pose`."""
    hx, hy, hz = half_extents
    c, s = abs(math.cos(pose.yaw)), abs(math.sin(pose.yaw))
    ax = hx * c + hy * s
    ay = hx * s + hy * c
    return Aabb.from_center(pose.x, pose.y, pose.z, ax, ay, hz)


@dataclass
class FrameTree:
    """Tree of fixed relative poses rooted at the world frame.

    Maps child frame -> (parent frame, pose of child expressed in parent).
    """

    root: str = WORLD_FRAME
    _edges: dict[str, tuple[str, Pose]] = field(default_factory=dict)

    def add(self, parent: str, child: str, pose: Pose) -> None:
        if not child or not parent:
            raise FrameError("frame names must be non-empty")
        if child == self.root:
            raise FrameError(f"cannot re-parent root frame {self.root!r}")
        if child in self._edges:
            raise FrameError(f"frame {child!r} already declared")
        self._edges[child] = (parent, pose)

    def set_edge(self, parent: str, child: str, pose: Pose) -> None:
        """Replace (or create) the edge for a moving frame such as the robot base."""
        if child == self.root:
            raise FrameError(f"cannot re-parent root frame {self.root!r}")
        self._edges[child] = (parent, pose)

    def frames(self) -> set[str]:
        return {self.root, *self._edges}

    def pose_in_root(self, frame: str) -> Pose:
        if frame == self.root:
            return Pose(0.0, 0.0, 0.0, 0.0)
        chain: list[Pose] = []
        seen = {frame}
        cur = frame
        while cur != self.root:
            if cur not in self._edges:
                raise FrameError(f"unknown frame {cur!r}")
            parent, pose = self._edges[cur]
            chain.append(pose)
            if parent in seen:
                raise FrameError(f"frame cycle through {parent!r}")
            seen.add(parent)
            cur = parent
        result = Pose(0.0, 0.0, 0.0, 0.0)
        for pose in reversed(chain):
            result = result.compose(pose)
        return result


def transform_pose(p: Pose, frame_from: str, frame_to: str, tree: FrameTree) -> Pose:
    """Re-express pose `p` from `frame_from` coordinates into `frame_to`."""
    if frame_from == frame_to:
        return p
    world = tree.pose_in_root(frame_from).compose(p)
    return tree.pose_in_root(frame_to).inverse().compose(world)


def settle_on_surface(
    half_extents: tuple[float, float, float],
    target: Pose,
    surface_top: float,
    footprint: Aabb,
) -> Pose:
    """Resting pose of a box placed at a planar target on a horizontal surface.

    The target's x, y and yaw are kept; z becomes surface top plus the box's
    vertical half-extent. The planar position must fall inside the surface
    footprint.
    """
    if not footprint.contains_xy(target.x, target.y):
        raise PlacementError(
            f"pose ({target.x:.3f}, {target.y:.3f}) outside surface footprint"
        )
    return Pose(target.x, target.y, surface_top + half_extents[2], target.yaw)

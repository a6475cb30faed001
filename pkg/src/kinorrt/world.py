"""Free state/control space: bounds, box obstacles and trajectory checks.

Obstacles are axis-aligned boxes in workspace coordinates (the state entries
listed in ``position_dims``). The robot is a disk/sphere of ``robot_radius``;
a state collides when the distance from its projected position to a box is at
most that radius. Checks are discrete at trajectory sample resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from kinorrt.errors import ConfigurationError


def wrap_angle(v):
    """Map angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(v, dtype=float) + math.pi, 2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lower, upper]`` in workspace coordinates."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ConfigurationError("obstacle corners must be non-empty vectors of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ConfigurationError("obstacle corners must be finite")
        if not np.all(hi > lo):
            raise ConfigurationError("obstacle boxes need positive extent in every dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def distance(self, p) -> float:
        gap = np.maximum(np.maximum(self.lower - p, p - self.upper), 0.0)
        return float(np.sqrt(gap @ gap))

    def scaled(self, factor: float) -> "Box":
        """Box with the same center and extents multiplied by ``factor``."""
        mid = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower) * factor
        return Box(mid - half, mid + half)


def _vec(value, name: str, size: int | None = None) -> np.ndarray:
    arr = np.array(value, dtype=float).ravel()
    if size is not None and arr.size != size:
        raise ConfigurationError(f"{name} must have length {size}, got {arr.size}")
    if np.any(np.isnan(arr)):
        raise ConfigurationError(f"{name} contains NaN")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Environment:
    """State/control bounds plus box obstacles.

    Parameters
    ----------
    state_lower, state_upper : array_like
        Per-dimension state bounds; infinities allowed.
    control_lower, control_upper : array_like
        Per-dimension control bounds.
    obstacles : sequence of Box
        Workspace boxes.
    position_dims : sequence of int
        State indices that form the workspace position.
    robot_radius : float
        Radius of the robot disk/sphere.
    angle_dims : sequence of int
        State indices wrapped into ``[-pi, pi)`` before bound checks.
    """

    state_lower: np.ndarray
    state_upper: np.ndarray
    control_lower: np.ndarray
    control_upper: np.ndarray
    obstacles: tuple = ()
    position_dims: tuple = ()
    robot_radius: float = 0.0
    angle_dims: tuple = field(default=())

    def __post_init__(self):
        slo = _vec(self.state_lower, "state_lower")
        n = slo.size
        shi = _vec(self.state_upper, "state_upper", n)
        clo = _vec(self.control_lower, "control_lower")
        chi = _vec(self.control_upper, "control_upper", clo.size)
        if np.any(slo > shi) or np.any(clo > chi):
            raise ConfigurationError("lower bounds must not exceed upper bounds")
        pos = tuple(int(i) for i in self.position_dims)
        if len(set(pos)) != len(pos) or any(i < 0 or i >= n for i in pos):
            raise ConfigurationError(f"position_dims must be distinct indices below {n}")
        ang = tuple(int(i) for i in self.angle_dims)
        if any(i < 0 or i >= n for i in ang):
            raise ConfigurationError(f"angle_dims must be indices below {n}")
        obs = tuple(b if isinstance(b, Box) else Box(*b) for b in self.obstacles)
        for b in obs:
            if b.lower.size != len(pos):
                raise ConfigurationError(f"obstacle dimension {b.lower.size} does not match {len(pos)} position dims")
        r = float(self.robot_radius)
        if not r >= 0.0 or not math.isfinite(r):
            raise ConfigurationError("robot_radius must be a finite non-negative number")
        for name, val in (
            ("state_lower", slo),
            ("state_upper", shi),
            ("control_lower", clo),
            ("control_upper", chi),
            ("obstacles", obs),
            ("position_dims", pos),
            ("robot_radius", r),
            ("angle_dims", ang),
        ):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.state_lower.size

    @property
    def m(self) -> int:
        return self.control_lower.size

    @cached_property
    def kernel_args(self) -> tuple:
        """Arguments expected by the collision kernels, in order."""
        k = len(self.position_dims)
        wrap = np.zeros(self.n, dtype=np.int8)
        wrap[list(self.angle_dims)] = 1
        box_lo = np.array([b.lower for b in self.obstacles], dtype=float).reshape(-1, k)
        box_hi = np.array([b.upper for b in self.obstacles], dtype=float).reshape(-1, k)
        return (
            np.ascontiguousarray(self.state_lower),
            np.ascontiguousarray(self.state_upper),
            wrap,
            np.ascontiguousarray(self.control_lower),
            np.ascontiguousarray(self.control_upper),
            np.array(self.position_dims, dtype=np.int64),
            np.ascontiguousarray(box_lo),
            np.ascontiguousarray(box_hi),
            self.robot_radius,
        )

    def with_obstacles(self, obstacles) -> "Environment":
        return Environment(
            self.state_lower,
            self.state_upper,
            self.control_lower,
            self.control_upper,
            tuple(obstacles),
            self.position_dims,
            self.robot_radius,
            self.angle_dims,
        )

    def equals(self, other: "Environment") -> bool:
        if len(self.obstacles) != len(other.obstacles):
            return False
        same_boxes = all(
            np.array_equal(a.lower, b.lower) and np.array_equal(a.upper, b.upper)
            for a, b in zip(self.obstacles, other.obstacles)
        )
        return (
            same_boxes
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("state_lower", "state_upper", "control_lower", "control_upper")
            )
            and self.position_dims == other.position_dims
            and self.angle_dims == other.angle_dims
            and self.robot_radius == other.robot_radius
        )

    # -- point checks ------------------------------------------------------

    def in_bounds(self, x) -> bool:
        x = np.array(x, dtype=float)
        if self.angle_dims:
            idx = list(self.angle_dims)
            x[idx] = wrap_angle(x[idx])
        return bool(np.all((x >= self.state_lower) & (x <= self.state_upper)))

    def collides(self, x) -> bool:
        if not self.obstacles:
            return False
        p = np.asarray(x, dtype=float)[list(self.position_dims)]
        return any(b.distance(p) <= self.robot_radius for b in self.obstacles)

    def state_free(self, x) -> bool:
        return self.in_bounds(x) and not self.collides(x)

    def control_free(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all((u >= self.control_lower) & (u <= self.control_upper)))

    def states_free(self, X) -> np.ndarray:
        """Vectorized :meth:`state_free` over the rows of ``X``."""
        X = np.array(X, dtype=float, ndmin=2)
        if self.angle_dims:
            idx = list(self.angle_dims)
            X[:, idx] = wrap_angle(X[:, idx])
        ok = np.all((X >= self.state_lower) & (X <= self.state_upper), axis=1)
        if self.obstacles:
            P = X[:, list(self.position_dims)]
            lo = np.array([b.lower for b in self.obstacles])
            hi = np.array([b.upper for b in self.obstacles])
            gap = np.maximum(np.maximum(lo[None] - P[:, None], P[:, None] - hi[None]), 0.0)
            ok &= ~np.any(np.einsum("sbk,sbk->sb", gap, gap) <= self.robot_radius**2, axis=1)
        return ok

    def trajectory_free(self, traj) -> bool:
        """True iff every sample of ``traj`` has a free state and an in-bound control."""
        x = np.asarray(traj.x, dtype=float)
        u = np.asarray(traj.u, dtype=float)
        if x.shape[0] == 0:
            return True
        if not np.all((u >= self.control_lower) & (u <= self.control_upper)):
            return False
        return bool(np.all(self.states_free(x)))

    # -- sampling support --------------------------------------------------

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.state_lower)) and np.all(np.isfinite(self.state_upper)))


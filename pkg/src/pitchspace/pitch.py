"""Pitch coordinates, attack-direction normalization, and the positional field weight.

Coordinate convention: origin at the pitch center, x along the goal-to-goal
axis, y along the halfway line. After normalization the attacking team plays
toward +x, so the opponent goal center sits at (length/2, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .match_io import TrackedFrame


@dataclass(frozen=True)
class Point2:
    """A 2D point (or vector) in meters / meters-per-second."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def __add__(self, other: "Point2") -> "Point2":
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point2") -> "Point2":
        return Point2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Point2":
        return Point2(self.x * k, self.y * k)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class PitchSpec:
    """Pitch dimensions and the grid resolution used for area computations."""

    length: float = 105.0
    width: float = 68.0
    grid_cell: float = 0.5

    def __post_init__(self) -> None:
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"pitch dimensions must be positive, got {self.length}x{self.width}")
        if not 0 < self.grid_cell <= min(self.length, self.width) / 10:
            raise ValueError(
                f"grid_cell must be in (0, {min(self.length, self.width) / 10}], got {self.grid_cell}"
            )

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    @property
    def half_width(self) -> float:
        return self.width / 2.0

    @property
    def nx(self) -> int:
        return math.ceil(self.length / self.grid_cell)

    @property
    def ny(self) -> int:
        return math.ceil(self.width / self.grid_cell)

    @property
    def goal_center(self) -> Point2:
        """Center of the goal the attacking team plays toward (+x)."""
        return Point2(self.half_length, 0.0)

    def contains(self, p: Point2, slack: float = 0.0) -> bool:
        return (
            -self.half_length - slack <= p.x <= self.half_length + slack
            and -self.half_width - slack <= p.y <= self.half_width + slack
        )

    def clamp(self, p: Point2) -> Point2:
        """Clamp a point to the pitch rectangle (tracking noise routinely exceeds lines)."""
        return Point2(
            min(max(p.x, -self.half_length), self.half_length),
            min(max(p.y, -self.half_width), self.half_width),
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid cell center coordinates: (xs of shape (nx,), ys of shape (ny,))."""
        xs = -self.half_length + (np.arange(self.nx) + 0.5) * self.grid_cell
        ys = -self.half_width + (np.arange(self.ny) + 0.5) * self.grid_cell
        return xs, ys


@dataclass(frozen=True)
class WeightParams:
    """Shape of the positional field weight; beta controls the lateral falloff."""

    beta: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")


def field_weight(
    p: Point2, pitch: PitchSpec, w: WeightParams, attacking_right: bool = True
) -> float:
    """Positional weight in [0, 1]: grows toward the opponent goal and the lateral center.

    Separable bilinear form x_norm * (1 - beta * y_norm). For a team attacking
    left the x term is mirrored (1 - x_norm), matching the defending-team
    weight used for their space scores.

    Raises ValueError for points outside the pitch rectangle; callers that
    evaluate tracking points are expected to clamp first.
    """
    if not pitch.contains(p):
        raise ValueError(f"point ({p.x}, {p.y}) outside {pitch.length}x{pitch.width} pitch")
    x_norm = (p.x + pitch.half_length) / pitch.length
    if not attacking_right:
        x_norm = 1.0 - x_norm
    y_norm = abs(p.y) / pitch.half_width
    return x_norm * (1.0 - w.beta * y_norm)


@lru_cache(maxsize=32)
def weight_grid(pitch: PitchSpec, w: WeightParams, attacking_right: bool = True) -> np.ndarray:
    """Field weight evaluated at every grid cell center, shape (ny, nx).

    Cell centers that overhang the pitch rectangle (non-divisible dimensions)
    are clamped to the boundary.
    """
    xs, ys = pitch.cell_centers()
    xs = np.clip(xs, -pitch.half_length, pitch.half_length)
    ys = np.clip(ys, -pitch.half_width, pitch.half_width)
    x_norm = (xs + pitch.half_length) / pitch.length
    if not attacking_right:
        x_norm = 1.0 - x_norm
    y_norm = np.abs(ys) / pitch.half_width
    grid = x_norm[np.newaxis, :] * (1.0 - w.beta * y_norm)[:, np.newaxis]
    grid.setflags(write=False)
    return grid


def goal_distance_angle(p: Point2, pitch: PitchSpec) -> tuple[float, float]:
    """Distance and absolute angle (radians, in [0, pi]) to the opponent goal center.

    Assumes attack normalized to +x. A point exactly at the goal center has
    distance 0 and angle 0.
    """
    goal = pitch.goal_center
    dx = goal.x - p.x
    dy = goal.y - p.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0, 0.0
    return dist, math.atan2(abs(dy), dx)


def normalize_attack_direction(
    frame: "TrackedFrame", attacking_team_attacks_right: bool, pitch: PitchSpec | None = None
) -> "TrackedFrame":
    """Return the frame with the attack aligned toward +x.

    If the attacking team already attacks right, the frame is returned
    unchanged. Otherwise every x position and x velocity component (players
    and ball) is negated; y is untouched and team labels are preserved.
    Positions beyond the pitch bounds (+5 m slack) pass through but are
    flagged once in the returned frame's metadata.
    """
    if attacking_team_attacks_right:
        return frame

    def _mirror(v: Point2) -> Point2:
        return Point2(-v.x, v.y)

    players = tuple(replace(p, pos=_mirror(p.pos), vel=_mirror(p.vel)) for p in frame.players)
    ball = replace(frame.ball, pos=_mirror(frame.ball.pos), vel=_mirror(frame.ball.vel))
    bounds = pitch if pitch is not None else PitchSpec()
    metadata = frame.metadata
    oob = sorted(p.player_id for p in frame.players if not bounds.contains(p.pos, slack=5.0))
    if oob:
        note = f"positions outside pitch bounds (+5 m slack): {', '.join(oob)}"
        if note not in metadata.warnings:
            metadata = replace(metadata, warnings=metadata.warnings + (note,))
    return replace(frame, players=players, ball=ball, metadata=metadata)

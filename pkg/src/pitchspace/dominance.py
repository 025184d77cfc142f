"""Arrival-time motion model, velocity-aware Voronoi grids, and space scores.

The pitch is partitioned on a cell-center grid: each cell belongs to the
player who reaches it first under a reaction-then-sprint motion model. A
player's space score is the weighted area of their region, using the
attacking-direction field weight for attackers and the left-right mirrored
weight for defenders. Offside attackers are excluded from the partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .pitch import PitchSpec, Point2, WeightParams, weight_grid

if TYPE_CHECKING:
    from .match_io import TrackedFrame

ATTACKING = "attacking"
DEFENDING = "defending"

MAX_TRACKED_SPEED = 13.0  # m/s, sanity bound on tracked player velocity

# Unit displacement directions at k*45 deg counterclockwise from +x (k = 0..7).
_S = math.sqrt(0.5)
DIRECTIONS_8: tuple[tuple[float, float], ...] = (
    (1.0, 0.0),
    (_S, _S),
    (0.0, 1.0),
    (-_S, _S),
    (-1.0, 0.0),
    (-_S, -_S),
    (0.0, -1.0),
    (_S, -_S),
)


@dataclass(frozen=True)
class PlayerState:
    """Kinematic state of one player at one instant."""

    player_id: str
    team: str
    pos: Point2
    vel: Point2 = Point2(0.0, 0.0)
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if self.vel.norm() > MAX_TRACKED_SPEED + 1e-9:
            raise ValueError(
                f"player {self.player_id} velocity {self.vel.norm():.2f} m/s exceeds "
                f"{MAX_TRACKED_SPEED} m/s sanity bound"
            )


@dataclass(frozen=True)
class MotionParams:
    """Reaction-then-sprint arrival model parameters."""

    reaction_time: float = 0.2
    max_speed: float = 7.8

    def __post_init__(self) -> None:
        if self.reaction_time < 0:
            raise ValueError(f"reaction_time must be >= 0, got {self.reaction_time}")
        if self.max_speed <= 0:
            raise ValueError(f"max_speed must be > 0, got {self.max_speed}")


@dataclass
class DominanceField:
    """Grid partition of the pitch: per-cell owning player and minimal arrival time.

    `owner` holds indices into `player_ids` (ascending id order of the
    eligible players); `time` holds the owner's arrival time in seconds.
    Both arrays have shape (ny, nx).
    """

    pitch: PitchSpec
    player_ids: list[str]
    owner: np.ndarray
    time: np.ndarray

    @property
    def cell_area(self) -> float:
        return self.pitch.grid_cell ** 2

    def owned_cell_counts(self) -> dict[str, int]:
        counts = np.bincount(self.owner.ravel(), minlength=len(self.player_ids))
        return {pid: int(c) for pid, c in zip(self.player_ids, counts)}


@dataclass
class PlayerSpaceScore:
    """Weighted-area score for one player, with optional 1 m directional deltas."""

    player_id: str
    team: str
    score: float
    deltas: np.ndarray | None = None
    excluded_offside: bool = False


@dataclass
class SpaceScoreTable:
    """Per-player space scores for one frame, keyed by player id."""

    entries: dict[str, PlayerSpaceScore]

    def score(self, player_id: str) -> float:
        return self.entries[player_id].score

    def __iter__(self):
        return iter(self.entries.values())


def arrival_time(ps: PlayerState, target: Point2, mp: MotionParams) -> float:
    """Time to reach the target: drift at current velocity for the reaction
    time, then run straight at max speed."""
    px = ps.pos.x + ps.vel.x * mp.reaction_time
    py = ps.pos.y + ps.vel.y * mp.reaction_time
    return mp.reaction_time + math.hypot(target.x - px, target.y - py) / mp.max_speed


def _sorted_eligible(frame: "TrackedFrame", excluded: Iterable[str]) -> list[PlayerState]:
    excluded = frozenset(excluded)
    players = sorted(
        (p for p in frame.players if p.player_id not in excluded),
        key=lambda p: p.player_id,
    )
    return players


def _time_stack(
    players: list[PlayerState], pitch: PitchSpec, mp: MotionParams
) -> np.ndarray:
    """Arrival times of each player to every cell center, shape (P, ny, nx)."""
    xs, ys = pitch.cell_centers()
    pred = np.array(
        [
            (p.pos.x + p.vel.x * mp.reaction_time, p.pos.y + p.vel.y * mp.reaction_time)
            for p in players
        ]
    )
    dx = xs[np.newaxis, np.newaxis, :] - pred[:, 0, np.newaxis, np.newaxis]
    dy = ys[np.newaxis, :, np.newaxis] - pred[:, 1, np.newaxis, np.newaxis]
    return mp.reaction_time + np.sqrt(dx * dx + dy * dy) / mp.max_speed


def compute_dominance_grid(
    frame: "TrackedFrame",
    pitch: PitchSpec,
    mp: MotionParams,
    excluded: Iterable[str] = (),
) -> DominanceField:
    """Assign every grid cell to the player reaching its center first.

    Ties are broken by the smaller player id (ids are totally ordered), which
    the argmin over id-sorted players implements directly.
    """
    players = _sorted_eligible(frame, excluded)
    if not players:
        raise ValueError("dominance grid requires at least one eligible player")
    times = _time_stack(players, pitch, mp)
    owner = np.argmin(times, axis=0).astype(np.int32)
    best = np.min(times, axis=0)
    return DominanceField(
        pitch=pitch,
        player_ids=[p.player_id for p in players],
        owner=owner,
        time=best,
    )


def _team_weight_sums(
    field_: DominanceField,
    teams: Mapping[str, str],
    w: WeightParams,
) -> np.ndarray:
    """Weighted cell-count sums per owner index, using each owner's team weight."""
    att = weight_grid(field_.pitch, w, attacking_right=True)
    dfn = weight_grid(field_.pitch, w, attacking_right=False)
    n = len(field_.player_ids)
    flat = field_.owner.ravel()
    sums_att = np.bincount(flat, weights=att.ravel(), minlength=n)
    sums_def = np.bincount(flat, weights=dfn.ravel(), minlength=n)
    pick = np.array([teams[pid] == DEFENDING for pid in field_.player_ids])
    return np.where(pick, sums_def, sums_att)


def space_scores(
    field_: DominanceField, frame: "TrackedFrame", w: WeightParams
) -> SpaceScoreTable:
    """Weighted-area score per player: cell area times field weight, summed
    over owned cells. Players absent from the field (offside-excluded) get 0."""
    teams = {p.player_id: p.team for p in frame.players}
    sums = _team_weight_sums(field_, teams, w)
    index = {pid: i for i, pid in enumerate(field_.player_ids)}
    entries: dict[str, PlayerSpaceScore] = {}
    for p in sorted(frame.players, key=lambda q: q.player_id):
        if p.player_id in index:
            score = float(sums[index[p.player_id]] * field_.cell_area)
            entries[p.player_id] = PlayerSpaceScore(p.player_id, p.team, score)
        else:
            entries[p.player_id] = PlayerSpaceScore(
                p.player_id, p.team, 0.0, deltas=np.zeros(8), excluded_offside=True
            )
    return SpaceScoreTable(entries)


def directional_space_deltas(
    frame: "TrackedFrame",
    player_id: str,
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    excluded: Iterable[str] | None = None,
) -> np.ndarray:
    """Space-score change for 1 m moves in the 8 compass directions.

    The full dominance grid is recomputed with only this player displaced
    (velocity unchanged); displaced positions are clamped to the pitch
    boundary. delta[k] = displaced score - base score, k*45 deg from +x.
    """
    if excluded is None:
        excluded = offside_positions(frame)
    excluded = frozenset(excluded)
    target = frame.player(player_id)
    if target is None:
        raise ValueError(f"unknown player_id {player_id!r}")
    if player_id in excluded:
        raise ValueError(f"player {player_id!r} is excluded from the dominance computation")

    base_field = compute_dominance_grid(frame, pitch, mp, excluded)
    base = space_scores(base_field, frame, w).score(player_id)

    deltas = np.empty(8)
    for k, (dx, dy) in enumerate(DIRECTIONS_8):
        moved = pitch.clamp(Point2(target.pos.x + dx, target.pos.y + dy))
        players = tuple(
            replace(p, pos=moved) if p.player_id == player_id else p for p in frame.players
        )
        probe = replace(frame, players=players)
        probe_field = compute_dominance_grid(probe, pitch, mp, excluded)
        deltas[k] = space_scores(probe_field, probe, w).score(player_id) - base
    return deltas


def offside_positions(frame: "TrackedFrame") -> frozenset[str]:
    """Attackers in a static offside position (attack normalized to +x).

    An attacker is excluded iff strictly beyond the halfway line, strictly
    beyond the ball, and strictly beyond the second-rearmost defender
    (rearmost = largest x). With fewer than two defenders only the ball and
    halfway conditions apply. Defenders are never excluded.
    """
    attackers = [p for p in frame.players if p.team == ATTACKING]
    defenders = [p for p in frame.players if p.team == DEFENDING]
    ball_x = frame.ball.pos.x
    second_rearmost: float | None = None
    if len(defenders) >= 2:
        xs = sorted((d.pos.x for d in defenders), reverse=True)
        second_rearmost = xs[1]
    out = set()
    for a in attackers:
        if a.pos.x <= 0.0 or a.pos.x <= ball_x:
            continue
        if second_rearmost is not None and a.pos.x <= second_rearmost:
            continue
        out.add(a.player_id)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Batch scoring path used by feature extraction.
#
# Recomputing the full grid for every 1 m probe of every candidate is
# O(events x candidates x 8 x players x cells). Holding everyone else's best
# time fixed while one player moves gives identical ownership at a fraction
# of the cost; equality with the naive operations is covered by tests.
# ---------------------------------------------------------------------------


@dataclass
class _FrameDominance:
    """Shared per-frame arrays for the batch scoring path."""

    pitch: PitchSpec
    players: list[PlayerState]
    times: np.ndarray  # (P, ny, nx)
    best: np.ndarray  # (ny, nx) minimal time
    best_idx: np.ndarray  # (ny, nx) argmin index (smallest id on ties)
    second: np.ndarray  # (ny, nx) second-smallest time
    second_idx: np.ndarray  # (ny, nx) argmin excluding the best row
    weights: np.ndarray  # (P, ny, nx) broadcastable per-player weight grids


def _prepare_frame_dominance(
    frame: "TrackedFrame",
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    excluded: Iterable[str] = (),
) -> _FrameDominance:
    players = _sorted_eligible(frame, excluded)
    if not players:
        raise ValueError("dominance grid requires at least one eligible player")
    times = _time_stack(players, pitch, mp)
    best_idx = np.argmin(times, axis=0).astype(np.int32)
    best = np.min(times, axis=0)
    if len(players) > 1:
        second = np.partition(times, 1, axis=0)[1]
        masked = times.copy()
        ny, nx = best_idx.shape
        iy, ix = np.ogrid[:ny, :nx]
        masked[best_idx, iy, ix] = np.inf
        second_idx = np.argmin(masked, axis=0).astype(np.int32)
    else:
        second = np.full_like(best, np.inf)
        second_idx = np.zeros_like(best_idx)
    att = weight_grid(pitch, w, attacking_right=True)
    dfn = weight_grid(pitch, w, attacking_right=False)
    weights = np.stack([dfn if p.team == DEFENDING else att for p in players])
    return _FrameDominance(pitch, players, times, best, best_idx, second, second_idx, weights)


def _owned_weight_sum(fd: _FrameDominance, idx: int, own_time: np.ndarray) -> float:
    """Weighted cell sum owned by player `idx` when their time grid is `own_time`.

    Ownership against the rest of the field: strictly earlier arrival, or an
    exact tie against a larger-id rest owner. Accumulates in raveled cell
    order (as the full-grid bincount does) so results match the naive
    recomputation bitwise.
    """
    rest_time = np.where(fd.best_idx == idx, fd.second, fd.best)
    rest_idx = np.where(fd.best_idx == idx, fd.second_idx, fd.best_idx)
    wins = (own_time < rest_time) | ((own_time == rest_time) & (idx < rest_idx))
    sums = np.bincount(
        wins.ravel().astype(np.int64), weights=fd.weights[idx].ravel(), minlength=2
    )
    return float(sums[1]) * fd.pitch.grid_cell ** 2


def _displaced_times(
    player: PlayerState, pitch: PitchSpec, mp: MotionParams
) -> np.ndarray:
    """Arrival times for the 8 clamped 1 m displacements, shape (8, ny, nx)."""
    xs, ys = pitch.cell_centers()
    pred = np.empty((8, 2))
    for k, (dx, dy) in enumerate(DIRECTIONS_8):
        moved = pitch.clamp(Point2(player.pos.x + dx, player.pos.y + dy))
        pred[k] = (moved.x + player.vel.x * mp.reaction_time, moved.y + player.vel.y * mp.reaction_time)
    ddx = xs[np.newaxis, np.newaxis, :] - pred[:, 0, np.newaxis, np.newaxis]
    ddy = ys[np.newaxis, :, np.newaxis] - pred[:, 1, np.newaxis, np.newaxis]
    return mp.reaction_time + np.sqrt(ddx * ddx + ddy * ddy) / mp.max_speed


def batch_scores_with_deltas(
    frame: "TrackedFrame",
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    delta_ids: Iterable[str],
    excluded: Iterable[str] = (),
) -> SpaceScoreTable:
    """Space scores for every player plus 8-direction deltas for `delta_ids`.

    Produces the same numbers as compute_dominance_grid -> space_scores ->
    directional_space_deltas, computed in one pass per frame.
    """
    excluded = frozenset(excluded)
    fd = _prepare_frame_dominance(frame, pitch, mp, w, excluded)
    index = {p.player_id: i for i, p in enumerate(fd.players)}
    delta_ids = set(delta_ids)
    unknown = delta_ids - {p.player_id for p in frame.players}
    if unknown:
        raise ValueError(f"unknown player ids {sorted(unknown)!r}")
    if delta_ids & excluded:
        raise ValueError(f"deltas requested for excluded players {sorted(delta_ids & excluded)!r}")

    flat = fd.best_idx.ravel()
    iy, ix = np.unravel_index(np.arange(flat.size), fd.best.shape)
    base_sums = np.bincount(
        flat, weights=fd.weights[flat, iy, ix], minlength=len(fd.players)
    )

    entries: dict[str, PlayerSpaceScore] = {}
    cell_area = pitch.grid_cell ** 2
    for p in sorted(frame.players, key=lambda q: q.player_id):
        if p.player_id in excluded:
            entries[p.player_id] = PlayerSpaceScore(
                p.player_id, p.team, 0.0, deltas=np.zeros(8), excluded_offside=True
            )
            continue
        i = index[p.player_id]
        score = float(base_sums[i] * cell_area)
        deltas = None
        if p.player_id in delta_ids:
            probe = _displaced_times(fd.players[i], pitch, mp)
            deltas = np.empty(8)
            for k in range(8):
                deltas[k] = _owned_weight_sum(fd, i, probe[k]) - score
        entries[p.player_id] = PlayerSpaceScore(p.player_id, p.team, score, deltas=deltas)
    return SpaceScoreTable(entries)

"""Off-ball / on-ball state variables, top-n receiver selection, and the model table.

Per candidate receiver the five off-ball variables are, in fixed column order:
fast_space_vel (the player's space score), variation_space_vel (signed
max-magnitude 1 m directional delta), dist_ball, time_to_player, and
time_to_passline. Dataset columns are named <variable>_<rank> for ranks 1..n.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dominance import (
    ATTACKING,
    DEFENDING,
    MotionParams,
    arrival_time,
    batch_scores_with_deltas,
    directional_space_deltas,
    offside_positions,
)
from .match_io import MatchEvent, PassEvent, TrackedFrame, pass_events
from .pitch import PitchSpec, Point2, WeightParams, goal_distance_angle, normalize_attack_direction

logger = logging.getLogger(__name__)

FEATURE_VARIABLES = (
    "fast_space_vel",
    "variation_space_vel",
    "dist_ball",
    "time_to_player",
    "time_to_passline",
)
RANKING_VARIABLES = ("fast_space_vel", "dist_ball", "time_to_player", "time_to_passline")
FAST_SPACE_SEMANTICS = ("current", "best_move")


@dataclass(frozen=True)
class OffBallFeatures:
    """State variables for one candidate pass receiver."""

    player_id: str
    fast_space_vel: float
    variation_space_vel: float
    dist_ball: float
    time_to_player: float
    time_to_passline: float


@dataclass(frozen=True)
class HolderOnBall:
    holder_id: str
    dist_goal: float
    angle_goal: float
    nearest_defender_time: float
    deltas: tuple[float, ...]


@dataclass(frozen=True)
class NoHolderOnBall:
    attacker_id: str
    attacker_dist_goal: float
    attacker_angle_goal: float
    defender_id: str
    defender_dist_goal: float
    defender_angle_goal: float
    ball_speed: float


@dataclass(frozen=True)
class OnBallFeatures:
    """Exactly one of `holder` / `open_ball` is populated."""

    holder: HolderOnBall | None = None
    open_ball: NoHolderOnBall | None = None

    def __post_init__(self) -> None:
        if (self.holder is None) == (self.open_ball is None):
            raise ValueError("exactly one of holder/open_ball must be set")


@dataclass(frozen=True)
class PassSample:
    """One pass event row of the model table."""

    event_id: str
    label: int
    selected: tuple[str | None, ...]
    values: tuple[float, ...]
    imputed: tuple[bool, ...]


@dataclass
class PassSampleTable:
    """Model-ready feature table; `raw` keeps +inf / padding NaN for
    leak-free fold-internal imputation."""

    event_ids: list[str]
    labels: np.ndarray
    columns: list[str]
    raw: np.ndarray
    selected: list[tuple[str | None, ...]]

    def __len__(self) -> int:
        return len(self.event_ids)

    @property
    def imputation_flags(self) -> np.ndarray:
        return ~np.isfinite(self.raw)

    def finite_medians(self) -> dict[str, float]:
        """Per-column median over finite values; errors on an all-imputed column."""
        medians: dict[str, float] = {}
        for j, col in enumerate(self.columns):
            vals = self.raw[:, j]
            finite = vals[np.isfinite(vals)]
            if finite.size == 0:
                raise ValueError(f"column {col!r} has no finite values to impute from")
            medians[col] = float(np.median(finite))
        return medians

    def imputed(self, medians: dict[str, float] | None = None) -> np.ndarray:
        if medians is None:
            medians = self.finite_medians()
        out = self.raw.copy()
        for j, col in enumerate(self.columns):
            mask = ~np.isfinite(out[:, j])
            out[mask, j] = medians[col]
        return out

    def subset(self, indices: Sequence[int]) -> "PassSampleTable":
        idx = list(indices)
        return PassSampleTable(
            event_ids=[self.event_ids[i] for i in idx],
            labels=self.labels[idx],
            columns=list(self.columns),
            raw=self.raw[idx],
            selected=[self.selected[i] for i in idx],
        )

    def sample(self, i: int) -> PassSample:
        return PassSample(
            event_id=self.event_ids[i],
            label=int(self.labels[i]),
            selected=self.selected[i],
            values=tuple(float(v) for v in self.raw[i]),
            imputed=tuple(bool(b) for b in self.imputation_flags[i]),
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["event_id", "label", *self.columns, *(f"imputed_{c}" for c in self.columns)]
            )
            flags = self.imputation_flags
            for i, eid in enumerate(self.event_ids):
                writer.writerow(
                    [eid, int(self.labels[i])]
                    + [repr(float(v)) for v in self.raw[i]]
                    + [int(b) for b in flags[i]]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "PassSampleTable":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:2] != ["event_id", "label"]:
                raise ValueError(f"{path}: not a feature table (bad header)")
            rest = header[2:]
            n_cols = len(rest) // 2
            columns = rest[:n_cols]
            if rest[n_cols:] != [f"imputed_{c}" for c in columns]:
                raise ValueError(f"{path}: malformed feature table header")
            event_ids, labels, rows = [], [], []
            for rec in reader:
                event_ids.append(rec[0])
                labels.append(int(rec[1]))
                rows.append([float(v) for v in rec[2 : 2 + n_cols]])
            return cls(
                event_ids=event_ids,
                labels=np.array(labels, dtype=np.int64),
                columns=columns,
                raw=np.array(rows, dtype=np.float64) if rows else np.empty((0, n_cols)),
                selected=[() for _ in event_ids],
            )


def write_medians(medians: dict[str, float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(medians, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_medians(path: str | Path) -> dict[str, float]:
    with open(path, encoding="utf-8") as fh:
        return {str(k): float(v) for k, v in json.load(fh).items()}


# ---------------------------------------------------------------------------
# Frame orientation
# ---------------------------------------------------------------------------


def infer_attacks_right(frame: TrackedFrame, team_id: str) -> bool:
    """Heuristic orientation: a team sits in its own half on average, so the
    smaller mean-x team attacks right. Used only when no marker is present."""
    own = [p.pos.x for p in frame.players if p.team == team_id]
    other = [p.pos.x for p in frame.players if p.team != team_id]
    if not own or not other:
        return True
    return float(np.mean(own)) <= float(np.mean(other))


def orient_frame(
    frame: TrackedFrame,
    attacking_team_id: str,
    attacks_right: bool | None = None,
) -> TrackedFrame:
    """Relabel teams as attacking/defending and normalize the attack to +x."""
    if attacks_right is None:
        if frame.metadata.attacks_right_team is not None:
            attacks_right = frame.metadata.attacks_right_team == attacking_team_id
        else:
            attacks_right = infer_attacks_right(frame, attacking_team_id)
            logger.warning(
                "frame %d: no attack-direction marker; inferred attacks_right=%s for team %s",
                frame.frame_index,
                attacks_right,
                attacking_team_id,
            )
    players = tuple(
        replace(p, team=ATTACKING if p.team == attacking_team_id else DEFENDING)
        for p in frame.players
    )
    oriented = replace(frame, players=players)
    return normalize_attack_direction(oriented, attacks_right)


# ---------------------------------------------------------------------------
# Off-ball and on-ball state variables
# ---------------------------------------------------------------------------


def passline_interception_time(
    defender_pos: Point2, defender_vel: Point2, a: Point2, b: Point2, mp: MotionParams
) -> float:
    """Minimal arrival time of a defender to any point of segment [a, b].

    Arrival time is monotone in the distance from the defender's predicted
    point, so the minimizer is the orthogonal projection onto the segment.
    """
    px = defender_pos.x + defender_vel.x * mp.reaction_time
    py = defender_pos.y + defender_vel.y * mp.reaction_time
    sx, sy = b.x - a.x, b.y - a.y
    denom = sx * sx + sy * sy
    if denom == 0.0:
        t = 0.0
    else:
        t = min(max(((px - a.x) * sx + (py - a.y) * sy) / denom, 0.0), 1.0)
    cx, cy = a.x + t * sx, a.y + t * sy
    return mp.reaction_time + math.hypot(px - cx, py - cy) / mp.max_speed


def offball_features(
    frame: TrackedFrame,
    pass_event: PassEvent,
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    fast_space_vel_semantics: str = "current",
) -> list[OffBallFeatures]:
    """State variables for every eligible candidate receiver of a pass.

    The frame must be oriented (attack toward +x, attacking/defending roles).
    Candidates are the attacking players minus the passer and minus offside
    positions; offside exclusion also applies to the dominance partition.
    """
    if fast_space_vel_semantics not in FAST_SPACE_SEMANTICS:
        raise ValueError(f"unknown fast_space_vel semantics {fast_space_vel_semantics!r}")
    if frame.player(pass_event.passer_id) is None:
        raise ValueError(f"passer {pass_event.passer_id!r} missing from frame {frame.frame_index}")
    excluded = offside_positions(frame)
    candidates = sorted(
        (
            p
            for p in frame.players
            if p.team == ATTACKING
            and p.player_id != pass_event.passer_id
            and p.player_id not in excluded
        ),
        key=lambda p: p.player_id,
    )
    if not candidates:
        return []
    table = batch_scores_with_deltas(
        frame, pitch, mp, w, delta_ids=[c.player_id for c in candidates], excluded=excluded
    )
    defenders = frame.team_players(DEFENDING)
    ball = frame.ball.pos

    out: list[OffBallFeatures] = []
    for c in candidates:
        entry = table.entries[c.player_id]
        deltas = entry.deltas
        k_star = int(np.argmax(np.abs(deltas)))  # first max -> smallest direction index on ties
        variation = float(deltas[k_star])
        score = entry.score
        if fast_space_vel_semantics == "best_move":
            score = score + float(np.max(deltas))
        if defenders:
            t_player = min(arrival_time(d, c.pos, mp) for d in defenders)
            t_passline = min(
                passline_interception_time(d.pos, d.vel, ball, c.pos, mp) for d in defenders
            )
        else:
            t_player = math.inf
            t_passline = math.inf
        out.append(
            OffBallFeatures(
                player_id=c.player_id,
                fast_space_vel=score,
                variation_space_vel=variation,
                dist_ball=ball.dist(c.pos),
                time_to_player=t_player,
                time_to_passline=t_passline,
            )
        )
    return out


def onball_features(
    frame: TrackedFrame,
    holder_id: str | None,
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
) -> OnBallFeatures:
    """Ball-holder state variables, or the open-ball variant when nobody has it.

    The frame must be oriented. The defending side's goal metrics are taken
    toward their own opponent goal (the -x goal), via mirroring.
    """
    attackers = frame.team_players(ATTACKING)
    defenders = frame.team_players(DEFENDING)
    if holder_id is not None:
        holder = frame.player(holder_id)
        if holder is None:
            raise ValueError(f"holder {holder_id!r} missing from frame {frame.frame_index}")
        if not defenders:
            raise ValueError("holder variant requires at least one defender")
        dist_goal, angle_goal = goal_distance_angle(holder.pos, pitch)
        nearest = min(arrival_time(d, holder.pos, mp) for d in defenders)
        deltas = directional_space_deltas(frame, holder_id, pitch, mp, w)
        return OnBallFeatures(
            holder=HolderOnBall(
                holder_id=holder_id,
                dist_goal=dist_goal,
                angle_goal=angle_goal,
                nearest_defender_time=nearest,
                deltas=tuple(float(d) for d in deltas),
            )
        )
    if not attackers or not defenders:
        raise ValueError("open-ball variant requires players on both teams")
    ball = frame.ball.pos

    def nearest_to_ball(players):
        return min(players, key=lambda p: (ball.dist(p.pos), p.player_id))

    a = nearest_to_ball(attackers)
    d = nearest_to_ball(defenders)
    a_dist, a_angle = goal_distance_angle(a.pos, pitch)
    d_dist, d_angle = goal_distance_angle(Point2(-d.pos.x, d.pos.y), pitch)
    return OnBallFeatures(
        open_ball=NoHolderOnBall(
            attacker_id=a.player_id,
            attacker_dist_goal=a_dist,
            attacker_angle_goal=a_angle,
            defender_id=d.player_id,
            defender_dist_goal=d_dist,
            defender_angle_goal=d_angle,
            ball_speed=frame.ball.vel.norm(),
        )
    )


# ---------------------------------------------------------------------------
# Top-n selection and dataset assembly
# ---------------------------------------------------------------------------


def select_top_n(
    features: list[OffBallFeatures],
    n: int,
    ranking_variable: str,
    infinite_times_first: bool = True,
) -> list[str]:
    """Player ids of the top-n candidates under the ranking variable.

    dist_ball ranks ascending, the other variables descending. Infinite time
    values rank first by default (largest under descending order); set
    infinite_times_first=False to rank them after all finite values. Ties
    break by player id. Returns fewer than n ids when fewer candidates exist.
    """
    if n <= 0:
        raise ValueError(f"n must be >= 1, got {n}")
    if ranking_variable not in RANKING_VARIABLES:
        raise ValueError(f"unknown ranking variable {ranking_variable!r}")

    def key(f: OffBallFeatures):
        v = getattr(f, ranking_variable)
        if ranking_variable == "dist_ball":
            return (0, v, f.player_id)
        if math.isinf(v):
            return (0 if infinite_times_first else 1, 0.0, f.player_id)
        return (1 if infinite_times_first else 0, -v, f.player_id)

    ordered = sorted(features, key=key)
    return [f.player_id for f in ordered[:n]]


@dataclass
class EventFeatures:
    """Candidate-receiver features for one pass event (selection-agnostic)."""

    event_id: str
    label: int
    features: list[OffBallFeatures]


def extract_event_features(
    frames: list[TrackedFrame],
    events: list[MatchEvent],
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    fast_space_vel_semantics: str = "current",
    attacks_right_override: dict[str, bool] | None = None,
) -> list[EventFeatures]:
    """Per-pass candidate features for one match, in event order."""
    frame_by_index = {f.frame_index: f for f in frames}
    out: list[EventFeatures] = []
    for ev in pass_events(events):
        frame = frame_by_index.get(ev.frame_index)
        if frame is None:
            raise ValueError(
                f"pass {ev.event_id} references frame {ev.frame_index} absent from tracking; "
                "synchronize the match first"
            )
        override = attacks_right_override.get(ev.team) if attacks_right_override else None
        oriented = orient_frame(frame, ev.team, attacks_right=override)
        feats = offball_features(oriented, ev, pitch, mp, w, fast_space_vel_semantics)
        out.append(EventFeatures(ev.event_id, ev.label, feats))
    return out


def column_names(n: int) -> list[str]:
    return [f"{var}_{rank}" for rank in range(1, n + 1) for var in FEATURE_VARIABLES]


def assemble_table(
    event_features: list[EventFeatures],
    n: int,
    ranking_variable: str,
    infinite_times_first: bool = True,
) -> PassSampleTable:
    """Rank candidates, lay out 5*n columns, leave padding as NaN in `raw`."""
    cols = column_names(n)
    rows = np.full((len(event_features), len(cols)), np.nan)
    selected: list[tuple[str | None, ...]] = []
    labels = np.empty(len(event_features), dtype=np.int64)
    for i, ef in enumerate(event_features):
        labels[i] = ef.label
        ids = select_top_n(ef.features, n, ranking_variable, infinite_times_first)
        by_id = {f.player_id: f for f in ef.features}
        padded: list[str | None] = list(ids) + [None] * (n - len(ids))
        selected.append(tuple(padded))
        for rank, pid in enumerate(padded):
            if pid is None:
                continue
            f = by_id[pid]
            base = rank * len(FEATURE_VARIABLES)
            for k, var in enumerate(FEATURE_VARIABLES):
                rows[i, base + k] = getattr(f, var)
    return PassSampleTable(
        event_ids=[ef.event_id for ef in event_features],
        labels=labels,
        columns=cols,
        raw=rows,
        selected=selected,
    )


def build_dataset(
    matches: Iterable[tuple[list[TrackedFrame], list[MatchEvent]]],
    n: int,
    ranking_variable: str,
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    fast_space_vel_semantics: str = "current",
    infinite_times_first: bool = True,
    attacks_right_override: dict[str, bool] | None = None,
) -> tuple[PassSampleTable, dict[str, float]]:
    """One PassSample row per pass event across matches, plus training medians.

    The returned table keeps raw values (+inf interception times, NaN rank
    padding); the medians are computed over finite values only and are what
    inference-time imputation should reuse.
    """
    all_features: list[EventFeatures] = []
    for frames, events in matches:
        all_features.extend(
            extract_event_features(
                frames, events, pitch, mp, w, fast_space_vel_semantics, attacks_right_override
            )
        )
    table = assemble_table(all_features, n, ranking_variable, infinite_times_first)
    medians = table.finite_medians()
    return table, medians

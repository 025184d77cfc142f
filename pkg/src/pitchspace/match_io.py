"""Generic tracking/event file ingestion, kickoff synchronization, and attack sequences.

File formats (one JSON object per line, UTF-8):

tracking: {"frame": int, "time": s, "ball": {"x","y","vx","vy"},
           "players": [{"id","team","x","y","vx","vy"}, ...]}
          Optional keys: "period", "attacks_right" (team id attacking +x).
events:   {"event_id", "type", "frame", "team", "player", "x", "y"}
          Optional keys: "receiver", "outcome" ("success"/"failure", passes only).

Coordinates are meters with the origin at the pitch center, +x toward the
right goal before normalization. Unknown keys are preserved and ignored.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .dominance import MAX_TRACKED_SPEED, PlayerState
from .pitch import Point2

logger = logging.getLogger(__name__)

KICKOFF_WINDOW = 50  # frames searched on each side of the kickoff hint
KICKOFF_BACKOFF = 4  # kickoff is this many frames before the acceleration peak
MIN_SEQUENCE_SECONDS = 1.0  # spans shorter than this are degenerate and dropped

SET_PLAY_TYPES = frozenset(
    {"kickoff", "throw_in", "free_kick", "corner", "goal_kick", "penalty"}
)

_TRACKING_KEYS = {"frame", "time", "ball", "players", "period", "attacks_right", "attacking_team"}
_PLAYER_KEYS = {"id", "team", "x", "y", "vx", "vy"}
_EVENT_KEYS = {"event_id", "type", "frame", "team", "player", "receiver", "outcome", "x", "y"}


class SchemaError(ValueError):
    """Hard validation failure in a data file, located by 1-based line number."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = f"{self.path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class Ball:
    pos: Point2
    vel: Point2


@dataclass(frozen=True)
class FrameMetadata:
    period: int = 1
    attacking_team_id: str | None = None  # team in possession, when known
    attacks_right_team: str | None = None  # team playing toward +x, when known
    warnings: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrackedFrame:
    """One synchronized snapshot: ball plus player kinematic states."""

    frame_index: int
    time: float
    ball: Ball
    players: tuple[PlayerState, ...]
    metadata: FrameMetadata = field(default_factory=FrameMetadata)

    def player(self, player_id: str) -> PlayerState | None:
        for p in self.players:
            if p.player_id == player_id:
                return p
        return None

    def team_players(self, team: str) -> list[PlayerState]:
        return [p for p in self.players if p.team == team]


@dataclass(frozen=True)
class MatchEvent:
    """One annotated on-ball action."""

    event_id: str
    type: str
    frame: int
    team: str
    player: str
    pos: Point2
    receiver: str | None = None
    outcome: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PassEvent:
    """A pass event joined to its synchronized frame."""

    event_id: str
    frame_index: int
    passer_id: str
    outcome: str  # "success" | "failure"
    ball_pos: Point2
    intended_receiver_id: str | None = None
    team: str = ""

    @property
    def label(self) -> int:
        return 1 if self.outcome == "success" else 0


@dataclass(frozen=True)
class AttackSequence:
    """Contiguous possession span for one team."""

    sequence_id: str
    team_id: str
    start_frame: int
    end_frame: int
    event_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.start_frame > self.end_frame:
            raise ValueError(f"sequence {self.sequence_id}: start > end")


@dataclass(frozen=True)
class DroppedEvents:
    """Events excluded from every sequence, with the reason."""

    event_ids: tuple[str, ...]
    reason: str


def pass_events(events: Iterable[MatchEvent]) -> list[PassEvent]:
    """The pass-typed events as labeled PassEvent records."""
    out = []
    for e in events:
        if e.type != "pass":
            continue
        out.append(
            PassEvent(
                event_id=e.event_id,
                frame_index=e.frame,
                passer_id=e.player,
                outcome=e.outcome or "failure",
                ball_pos=e.pos,
                intended_receiver_id=e.receiver,
                team=e.team,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Loading / saving
# ---------------------------------------------------------------------------


def _req(record: dict, key: str, path, line: int):
    if key not in record:
        raise SchemaError(f"missing required key {key!r}", path, line)
    return record[key]


def _num(value, key: str, path, line: int) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise SchemaError(f"key {key!r} must be a finite number, got {value!r}", path, line)
    return float(value)


def _parse_player(rec: dict, path, line: int, warnings: list[str]) -> PlayerState:
    if not isinstance(rec, dict):
        raise SchemaError(f"player record must be an object, got {rec!r}", path, line)
    pid = str(_req(rec, "id", path, line))
    team = str(_req(rec, "team", path, line))
    x = _num(_req(rec, "x", path, line), "x", path, line)
    y = _num(_req(rec, "y", path, line), "y", path, line)
    if "vx" not in rec or "vy" not in rec:
        warnings.append(f"player {pid}: velocity missing, assuming stationary")
    vx = _num(rec.get("vx", 0.0), "vx", path, line)
    vy = _num(rec.get("vy", 0.0), "vy", path, line)
    speed = math.hypot(vx, vy)
    if speed > MAX_TRACKED_SPEED:
        # Tracking glitches produce superhuman speeds; keep direction, cap magnitude.
        warnings.append(f"player {pid}: speed {speed:.1f} m/s capped to {MAX_TRACKED_SPEED}")
        vx *= MAX_TRACKED_SPEED / speed
        vy *= MAX_TRACKED_SPEED / speed
    extra = {k: v for k, v in rec.items() if k not in _PLAYER_KEYS}
    return PlayerState(pid, team, Point2(x, y), Point2(vx, vy), extra=extra)


def _iter_json_lines(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", path, line_no) from exc
            if not isinstance(record, dict):
                raise SchemaError("record must be a JSON object", path, line_no)
            yield line_no, record


def load_tracking(path: str | Path) -> list[TrackedFrame]:
    """Parse a tracking file into validated frames (strictly increasing frame index)."""
    frames: list[TrackedFrame] = []
    last_index: int | None = None
    for line_no, rec in _iter_json_lines(path):
        warnings: list[str] = []
        frame_index = _req(rec, "frame", path, line_no)
        if not isinstance(frame_index, int) or isinstance(frame_index, bool):
            raise SchemaError(f"'frame' must be an integer, got {frame_index!r}", path, line_no)
        if last_index is not None and frame_index <= last_index:
            raise SchemaError(
                f"non-monotone frame index: {frame_index} follows {last_index}", path, line_no
            )
        last_index = frame_index
        time = _num(_req(rec, "time", path, line_no), "time", path, line_no)
        ball_rec = _req(rec, "ball", path, line_no)
        if not isinstance(ball_rec, dict):
            raise SchemaError("'ball' must be an object", path, line_no)
        ball = Ball(
            pos=Point2(
                _num(_req(ball_rec, "x", path, line_no), "ball.x", path, line_no),
                _num(_req(ball_rec, "y", path, line_no), "ball.y", path, line_no),
            ),
            vel=Point2(
                _num(ball_rec.get("vx", 0.0), "ball.vx", path, line_no),
                _num(ball_rec.get("vy", 0.0), "ball.vy", path, line_no),
            ),
        )
        player_recs = _req(rec, "players", path, line_no)
        if not isinstance(player_recs, list):
            raise SchemaError("'players' must be a list", path, line_no)
        if len(player_recs) > 22:
            raise SchemaError(f"{len(player_recs)} players exceeds the 22-player bound", path, line_no)
        players = tuple(_parse_player(p, path, line_no, warnings) for p in player_recs)
        seen = set()
        for p in players:
            if p.player_id in seen:
                raise SchemaError(f"duplicate player id {p.player_id!r}", path, line_no)
            seen.add(p.player_id)
        if len(players) < 22:
            warnings.append(f"missing players: {len(players)}/22 present")
        period = rec.get("period", 1)
        if not isinstance(period, int) or isinstance(period, bool):
            raise SchemaError(f"'period' must be an integer, got {period!r}", path, line_no)
        extra = {k: v for k, v in rec.items() if k not in _TRACKING_KEYS}
        attacks_right = rec.get("attacks_right")
        attacking_team = rec.get("attacking_team")
        meta = FrameMetadata(
            period=period,
            attacking_team_id=str(attacking_team) if attacking_team is not None else None,
            attacks_right_team=str(attacks_right) if attacks_right is not None else None,
            warnings=tuple(warnings),
            extra=extra,
        )
        frames.append(TrackedFrame(frame_index, time, ball, players, meta))
    if not frames:
        raise SchemaError("tracking file contains no frames", path, 1)
    flagged = sum(1 for f in frames if f.metadata.warnings)
    if flagged:
        first = next(f for f in frames if f.metadata.warnings)
        logger.warning(
            "%s: %d/%d frames flagged (first: frame %d: %s)",
            path, flagged, len(frames), first.frame_index, first.metadata.warnings[0],
        )
    return frames


def load_events(path: str | Path) -> list[MatchEvent]:
    """Parse an event file; passes must carry a binary outcome."""
    events: list[MatchEvent] = []
    for line_no, rec in _iter_json_lines(path):
        event_id = str(_req(rec, "event_id", path, line_no))
        etype = str(_req(rec, "type", path, line_no))
        frame = _req(rec, "frame", path, line_no)
        if not isinstance(frame, int) or isinstance(frame, bool):
            raise SchemaError(f"'frame' must be an integer, got {frame!r}", path, line_no)
        team = str(_req(rec, "team", path, line_no))
        player = str(_req(rec, "player", path, line_no))
        x = _num(_req(rec, "x", path, line_no), "x", path, line_no)
        y = _num(_req(rec, "y", path, line_no), "y", path, line_no)
        receiver = rec.get("receiver")
        outcome = rec.get("outcome")
        if etype == "pass":
            if outcome not in ("success", "failure"):
                raise SchemaError(
                    f"pass outcome must be 'success' or 'failure', got {outcome!r}", path, line_no
                )
            if receiver is None:
                logger.warning("%s:%d: pass %s has no receiver", path, line_no, event_id)
        extra = {k: v for k, v in rec.items() if k not in _EVENT_KEYS}
        events.append(
            MatchEvent(
                event_id=event_id,
                type=etype,
                frame=frame,
                team=team,
                player=player,
                pos=Point2(x, y),
                receiver=str(receiver) if receiver is not None else None,
                outcome=str(outcome) if outcome is not None else None,
                extra=extra,
            )
        )
    return events


def load_match(
    tracking_path: str | Path, events_path: str | Path
) -> tuple[list[TrackedFrame], list[MatchEvent]]:
    """Load and validate one match (tracking + events)."""
    return load_tracking(tracking_path), load_events(events_path)


def _frame_record(f: TrackedFrame) -> dict:
    rec: dict = {
        "frame": f.frame_index,
        "time": f.time,
        "ball": {"x": f.ball.pos.x, "y": f.ball.pos.y, "vx": f.ball.vel.x, "vy": f.ball.vel.y},
        "players": [
            {
                "id": p.player_id,
                "team": p.team,
                "x": p.pos.x,
                "y": p.pos.y,
                "vx": p.vel.x,
                "vy": p.vel.y,
                **{k: p.extra[k] for k in sorted(p.extra)},
            }
            for p in f.players
        ],
    }
    if f.metadata.period != 1:
        rec["period"] = f.metadata.period
    if f.metadata.attacking_team_id is not None:
        rec["attacking_team"] = f.metadata.attacking_team_id
    if f.metadata.attacks_right_team is not None:
        rec["attacks_right"] = f.metadata.attacks_right_team
    for k in sorted(f.metadata.extra):
        rec[k] = f.metadata.extra[k]
    return rec


def _event_record(e: MatchEvent) -> dict:
    rec: dict = {
        "event_id": e.event_id,
        "type": e.type,
        "frame": e.frame,
        "team": e.team,
        "player": e.player,
        "x": e.pos.x,
        "y": e.pos.y,
    }
    if e.receiver is not None:
        rec["receiver"] = e.receiver
    if e.outcome is not None:
        rec["outcome"] = e.outcome
    for k in sorted(e.extra):
        rec[k] = e.extra[k]
    return rec


def save_match(
    frames: Iterable[TrackedFrame],
    events: Iterable[MatchEvent],
    tracking_path: str | Path,
    events_path: str | Path,
) -> None:
    """Write a match back to the line-oriented formats (loads back identically)."""
    with open(tracking_path, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps(_frame_record(f)) + "\n")
    with open(events_path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(_event_record(e)) + "\n")


# ---------------------------------------------------------------------------
# Kickoff synchronization
# ---------------------------------------------------------------------------


def detect_kickoff_frame(frames: list[TrackedFrame], event_kickoff_frame_hint: int) -> int:
    """Locate the kickoff in tracking frames near the event-data hint.

    Searches the window of +-50 frames around the hint, estimates ball
    acceleration from the position trace (central differences, one-sided at
    window edges), and returns the argmax-acceleration frame minus 4. Ties go
    to the earliest frame; a truncated window shrinks with a warning.
    """
    if not frames:
        raise ValueError("no frames supplied")
    indices = [f.frame_index for f in frames]
    lo = bisect_left(indices, event_kickoff_frame_hint - KICKOFF_WINDOW)
    hi = bisect_right(indices, event_kickoff_frame_hint + KICKOFF_WINDOW)
    window = frames[lo:hi]
    if len(window) < 2 * KICKOFF_WINDOW + 1:
        logger.warning(
            "kickoff window around frame %d truncated to %d frames",
            event_kickoff_frame_hint,
            len(window),
        )
    if len(window) < 3:
        raise ValueError(
            f"kickoff window around frame {event_kickoff_frame_hint} has only "
            f"{len(window)} frames; need at least 3"
        )
    pos = np.array([(f.ball.pos.x, f.ball.pos.y) for f in window])
    t = np.array([f.time for f in window])
    if np.any(np.diff(t) <= 0):
        raise ValueError("frame timestamps must be strictly increasing in the kickoff window")
    vel = np.gradient(pos, t, axis=0)
    acc = np.gradient(vel, t, axis=0)
    mag = np.hypot(acc[:, 0], acc[:, 1])
    # Timestamp rounding alone produces ~1e-12 m/s^2 of second-difference
    # noise; anything under this floor is indistinguishable from a ball that
    # never accelerated.
    if float(mag.max() - mag.min()) <= 1e-6:
        logger.warning("degenerate ball acceleration in kickoff window; using earliest frame")
        peak = 0
    else:
        peak = int(np.argmax(mag))  # first maximum -> earliest on ties
    return window[peak].frame_index - KICKOFF_BACKOFF


def synchronization_shift(frames: list[TrackedFrame], events: list[MatchEvent]) -> dict[int, int]:
    """Per-period shift to add to event frame indices to land on tracking frames.

    The hint for each period is its kickoff event's frame; periods without a
    kickoff event get shift 0 with a warning.
    """
    shifts: dict[int, int] = {}
    periods = sorted({f.metadata.period for f in frames})
    for period in periods:
        period_frames = [f for f in frames if f.metadata.period == period]
        kickoffs = [e for e in events if e.type == "kickoff"]
        hint = None
        for e in kickoffs:
            # Kickoff events carry event-clock frames; match them to the period
            # whose tracking span they fall nearest to.
            first, last = period_frames[0].frame_index, period_frames[-1].frame_index
            if first - KICKOFF_WINDOW <= e.frame <= last + KICKOFF_WINDOW:
                hint = e.frame
                break
        if hint is None:
            logger.warning("period %d has no kickoff event in range; assuming shift 0", period)
            shifts[period] = 0
            continue
        shifts[period] = detect_kickoff_frame(period_frames, hint) - hint
    return shifts


def apply_shift(events: list[MatchEvent], shifts: dict[int, int], frames: list[TrackedFrame]) -> list[MatchEvent]:
    """Shift event frame indices into tracking-frame space."""
    bounds: list[tuple[int, int, int]] = []
    for period in sorted(shifts):
        pf = [f for f in frames if f.metadata.period == period]
        bounds.append((pf[0].frame_index, pf[-1].frame_index, period))

    def period_of(frame_index: int) -> int:
        for first, last, period in bounds:
            if frame_index <= last + KICKOFF_WINDOW:
                return period
        return bounds[-1][2]

    return [replace(e, frame=e.frame + shifts[period_of(e.frame)]) for e in events]


# ---------------------------------------------------------------------------
# Attack-sequence segmentation
# ---------------------------------------------------------------------------


def segment_attack_sequences(
    events: list[MatchEvent], frames: list[TrackedFrame]
) -> tuple[list[AttackSequence], list[DroppedEvents]]:
    """Split events into possession sequences.

    A sequence opens at a set play or a possession gain and survives isolated
    opponent touches; it closes when the opponent records two consecutive
    on-ball events (the second touch triggers closure and the opponent's
    sequence opens retroactively at their first). Spans shorter than
    MIN_SEQUENCE_SECONDS and events referencing missing frames produce drop
    records instead of sequences.
    """
    frame_time = {f.frame_index: f.time for f in frames}
    sequences: list[AttackSequence] = []
    drops: list[DroppedEvents] = []
    counter = 0

    current_team: str | None = None
    current_events: list[MatchEvent] = []
    poisoned = False
    opp_run: list[MatchEvent] = []

    def close(end_events: list[MatchEvent]) -> None:
        nonlocal counter, poisoned
        if not end_events:
            return
        ids = tuple(e.event_id for e in end_events)
        team_events = [e for e in end_events if e.team == current_team]
        start = end_events[0].frame
        end = team_events[-1].frame if team_events else end_events[-1].frame
        if poisoned:
            drops.append(DroppedEvents(ids, "event referenced a missing frame"))
            logger.warning("sequence dropped (missing frame): events %s", ids)
            return
        duration = frame_time[end] - frame_time[start]
        if duration < MIN_SEQUENCE_SECONDS:
            drops.append(DroppedEvents(ids, f"span {duration:.2f}s below {MIN_SEQUENCE_SECONDS}s floor"))
            logger.warning("sequence dropped (%.2fs span): events %s", duration, ids)
            return
        counter += 1
        sequences.append(
            AttackSequence(
                sequence_id=f"seq-{counter:04d}",
                team_id=current_team or "",
                start_frame=start,
                end_frame=end,
                event_ids=ids,
            )
        )

    last_frame = None
    for ev in events:
        if last_frame is not None and ev.frame < last_frame:
            raise ValueError("events must be sorted by frame")
        last_frame = ev.frame
        missing = ev.frame not in frame_time

        if current_team is None:
            current_team, current_events, poisoned, opp_run = ev.team, [ev], missing, []
            continue

        if ev.type in SET_PLAY_TYPES:
            # A set play means the ball went dead: previous attack is over.
            close(current_events)
            if opp_run:
                drops.append(
                    DroppedEvents(tuple(e.event_id for e in opp_run), "opponent touches before a set play")
                )
            current_team, current_events, poisoned, opp_run = ev.team, [ev], missing, []
            continue

        if ev.team == current_team:
            current_events.extend(opp_run)  # tolerated isolated opponent touches
            poisoned = poisoned or missing or any(e.frame not in frame_time for e in opp_run)
            opp_run = []
            current_events.append(ev)
        else:
            opp_run.append(ev)
            if len(opp_run) >= 2:
                # Effective opponent possession: close and hand over.
                run = opp_run
                close(current_events)
                run_missing = any(e.frame not in frame_time for e in run)
                current_team, current_events, poisoned, opp_run = ev.team, list(run), run_missing, []

    close(current_events)
    if opp_run:
        drops.append(
            DroppedEvents(tuple(e.event_id for e in opp_run), "trailing opponent touches at match end")
        )
    return sequences, drops

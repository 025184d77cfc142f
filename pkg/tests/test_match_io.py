import json

import pytest

from pitchspace.match_io import (
    AttackSequence,
    MatchEvent,
    SchemaError,
    apply_shift,
    detect_kickoff_frame,
    load_events,
    load_match,
    load_tracking,
    pass_events,
    save_match,
    segment_attack_sequences,
    synchronization_shift,
)
from pitchspace.pitch import Point2

FRAME_TEMPLATE = {
    "frame": 0,
    "time": 0.0,
    "ball": {"x": 0.0, "y": 0.0, "vx": 0.0, "vy": 0.0},
    "players": [
        {"id": f"A{i:02d}", "team": "A", "x": -10.0 - i, "y": 0.0, "vx": 0.0, "vy": 0.0}
        for i in range(11)
    ]
    + [
        {"id": f"B{i:02d}", "team": "B", "x": 10.0 + i, "y": 0.0, "vx": 0.0, "vy": 0.0}
        for i in range(11)
    ],
}


def write_tracking(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def frame_record(frame, time=None, **overrides):
    rec = json.loads(json.dumps(FRAME_TEMPLATE))
    rec["frame"] = frame
    rec["time"] = time if time is not None else frame * 0.1
    rec.update(overrides)
    return rec


class TestLoadTracking:
    def test_minimal_two_frame_file(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_tracking(p, [frame_record(0), frame_record(1)])
        frames = load_tracking(p)
        assert len(frames) == 2
        assert all(not f.metadata.warnings for f in frames)

    def test_missing_player_is_a_warning(self, tmp_path):
        rec = frame_record(0)
        rec["players"] = rec["players"][:21]
        p = tmp_path / "t.jsonl"
        write_tracking(p, [rec])
        frames = load_tracking(p)
        assert any("missing player" in w for w in frames[0].metadata.warnings)

    def test_non_monotone_frame_index_names_both(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_tracking(p, [frame_record(5), frame_record(3)])
        with pytest.raises(SchemaError) as exc:
            load_tracking(p)
        assert "3" in str(exc.value) and "5" in str(exc.value)
        assert exc.value.line == 2

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(json.dumps(frame_record(0)) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(SchemaError) as exc:
            load_tracking(p)
        assert exc.value.line == 2

    def test_missing_required_key(self, tmp_path):
        rec = frame_record(0)
        del rec["ball"]
        p = tmp_path / "t.jsonl"
        write_tracking(p, [rec])
        with pytest.raises(SchemaError) as exc:
            load_tracking(p)
        assert "ball" in str(exc.value)

    def test_too_many_players(self, tmp_path):
        rec = frame_record(0)
        rec["players"].append(dict(rec["players"][0], id="X99"))
        p = tmp_path / "t.jsonl"
        write_tracking(p, [rec])
        with pytest.raises(SchemaError):
            load_tracking(p)

    def test_superhuman_speed_capped_with_warning(self, tmp_path):
        rec = frame_record(0)
        rec["players"][0]["vx"] = 20.0
        p = tmp_path / "t.jsonl"
        write_tracking(p, [rec])
        frames = load_tracking(p)
        assert any("capped" in w for w in frames[0].metadata.warnings)
        assert frames[0].players[0].vel.norm() <= 13.0 + 1e-9

    def test_unknown_keys_preserved(self, tmp_path):
        rec = frame_record(0, vendor_tag="xyz")
        p = tmp_path / "t.jsonl"
        write_tracking(p, [rec])
        frames = load_tracking(p)
        assert frames[0].metadata.extra == {"vendor_tag": "xyz"}

    def test_round_trip_identity(self, tmp_path):
        records = [frame_record(i, attacks_right="A") for i in range(4)]
        records[2]["players"][3]["nickname"] = "el niño"
        write_tracking(tmp_path / "t.jsonl", records)
        events = [
            {"event_id": "E1", "type": "pass", "frame": 1, "team": "A", "player": "A00",
             "receiver": "A01", "outcome": "success", "x": 1.0, "y": 2.0, "vendor": 9},
            {"event_id": "E2", "type": "shot", "frame": 3, "team": "A", "player": "A01",
             "x": 40.0, "y": 0.0},
        ]
        (tmp_path / "e.jsonl").write_text(
            "\n".join(json.dumps(e) for e in events) + "\n", encoding="utf-8"
        )
        f1, e1 = load_match(tmp_path / "t.jsonl", tmp_path / "e.jsonl")
        save_match(f1, e1, tmp_path / "t2.jsonl", tmp_path / "e2.jsonl")
        f2, e2 = load_match(tmp_path / "t2.jsonl", tmp_path / "e2.jsonl")
        assert f1 == f2
        assert e1 == e2


class TestLoadEvents:
    def test_pass_requires_outcome(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text(
            json.dumps({"event_id": "E1", "type": "pass", "frame": 1, "team": "A",
                        "player": "A00", "x": 0.0, "y": 0.0}) + "\n",
            encoding="utf-8",
        )
        with pytest.raises(SchemaError):
            load_events(p)

    def test_pass_events_view(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text(
            json.dumps({"event_id": "E1", "type": "pass", "frame": 4, "team": "A",
                        "player": "A00", "receiver": "A03", "outcome": "failure",
                        "x": 1.5, "y": -2.0}) + "\n",
            encoding="utf-8",
        )
        events = load_events(p)
        passes = pass_events(events)
        assert len(passes) == 1
        pe = passes[0]
        assert pe.label == 0
        assert pe.passer_id == "A00"
        assert pe.intended_receiver_id == "A03"
        assert pe.ball_pos == Point2(1.5, -2.0)


def impulse_frames(n, impulse, dt=0.1, v=(6.0, 2.0)):
    """Ball at rest, then constant velocity from the impulse frame on."""
    records = []
    for i in range(n):
        t = max(0, i - impulse) * dt
        rec = frame_record(i, time=i * dt)
        rec["ball"] = {"x": v[0] * t, "y": v[1] * t, "vx": 0.0, "vy": 0.0}
        records.append(rec)
    return records


class TestKickoffDetection:
    def test_planted_impulse(self, tmp_path):
        write_tracking(tmp_path / "t.jsonl", impulse_frames(200, impulse=100))
        frames = load_tracking(tmp_path / "t.jsonl")
        assert detect_kickoff_frame(frames, 98) == 96

    def test_constant_velocity_degenerates_to_earliest(self, tmp_path, caplog):
        records = []
        for i in range(200):
            rec = frame_record(i)
            rec["ball"] = {"x": 0.5 * i, "y": 0.0, "vx": 5.0, "vy": 0.0}
            records.append(rec)
        write_tracking(tmp_path / "t.jsonl", records)
        frames = load_tracking(tmp_path / "t.jsonl")
        with caplog.at_level("WARNING"):
            detected = detect_kickoff_frame(frames, 100)
        assert detected == 50 - 4  # earliest window frame minus 4
        assert any("degenerate" in r.message for r in caplog.records)

    def test_clipped_window(self, tmp_path, caplog):
        write_tracking(tmp_path / "t.jsonl", impulse_frames(90, impulse=20))
        frames = load_tracking(tmp_path / "t.jsonl")
        with caplog.at_level("WARNING"):
            detected = detect_kickoff_frame(frames, 30)  # window clipped to [0, 80]
        assert detected == 16
        assert any("truncated" in r.message for r in caplog.records)

    def test_shift_then_rerun_gives_zero(self, tmp_path):
        write_tracking(tmp_path / "t.jsonl", impulse_frames(200, impulse=100))
        frames = load_tracking(tmp_path / "t.jsonl")
        events = [
            MatchEvent("E0", "kickoff", 90, "A", "A00", Point2(0, 0)),
            MatchEvent("E1", "pass", 120, "A", "A00", Point2(0, 0), receiver="A01",
                       outcome="success"),
        ]
        shifts = synchronization_shift(frames, events)
        assert shifts == {1: 6}  # detected 96, hint 90
        shifted = apply_shift(events, shifts, frames)
        assert [e.frame for e in shifted] == [96, 126]
        assert synchronization_shift(frames, shifted) == {1: 0}


def ev(eid, etype, frame, team, player="P"):
    outcome = "success" if etype == "pass" else None
    return MatchEvent(eid, etype, frame, team, player, Point2(0, 0), outcome=outcome)


def frames_for(events, extra=200):
    last = max(e.frame for e in events) + extra
    return [
        # Bare-bones frame stand-ins: segmentation only reads index and time.
        type("F", (), {"frame_index": i, "time": i * 0.1, "metadata": None})()
        for i in range(last + 1)
    ]


class TestSegmentation:
    def make_frames(self, n=400):
        from pitchspace.match_io import Ball, FrameMetadata, TrackedFrame

        return [
            TrackedFrame(i, i * 0.1, Ball(Point2(0, 0), Point2(0, 0)), (), FrameMetadata())
            for i in range(n)
        ]

    def test_single_opponent_touch_tolerated(self):
        events = [
            ev("1", "pass", 10, "A"),
            ev("2", "pass", 40, "A"),
            ev("3", "interception", 60, "B"),
            ev("4", "recovery", 80, "A"),
            ev("5", "pass", 100, "A"),
        ]
        seqs, drops = segment_attack_sequences(events, self.make_frames())
        assert len(seqs) == 1
        assert seqs[0].team_id == "A"
        assert seqs[0].event_ids == ("1", "2", "3", "4", "5")
        assert not drops

    def test_two_consecutive_opponent_events_close(self):
        events = [
            ev("1", "pass", 10, "A"),
            ev("2", "pass", 40, "A"),
            ev("3", "pass", 60, "B"),
            ev("4", "pass", 90, "B"),
        ]
        seqs, drops = segment_attack_sequences(events, self.make_frames())
        assert [s.team_id for s in seqs] == ["A", "B"]
        assert seqs[0].event_ids == ("1", "2")
        assert seqs[0].end_frame == 40
        assert seqs[1].event_ids == ("3", "4")
        assert seqs[1].start_frame == 60  # opens retroactively at the first B event

    def test_set_play_opens_sequence(self):
        events = [
            ev("1", "kickoff", 10, "A"),
            ev("2", "pass", 30, "A"),
            ev("3", "corner", 80, "B"),
            ev("4", "pass", 95, "B"),
        ]
        seqs, _ = segment_attack_sequences(events, self.make_frames())
        assert [s.team_id for s in seqs] == ["A", "B"]
        assert seqs[0].start_frame == 10
        assert seqs[1].start_frame == 80

    def test_short_sequences_dropped(self):
        events = [
            ev("1", "pass", 10, "A"),  # lone event: zero-length span
            ev("2", "pass", 12, "B"),
            ev("3", "pass", 40, "B"),
        ]
        seqs, drops = segment_attack_sequences(events, self.make_frames())
        assert [s.team_id for s in seqs] == ["B"]
        assert any("1" in d.event_ids for d in drops)

    def test_missing_frame_drops_sequence(self):
        events = [
            ev("1", "pass", 10, "A"),
            ev("2", "pass", 9999, "A"),  # no such frame
            ev("3", "pass", 40, "A"),
        ]
        with pytest.raises(ValueError):
            # events must be frame-sorted; the missing frame sits beyond the end
            segment_attack_sequences(events, self.make_frames(100))

    def test_missing_frame_drops_sequence_sorted(self):
        events = [
            ev("1", "pass", 10, "A"),
            ev("2", "pass", 50, "A"),
            ev("3", "pass", 60, "A"),
        ]
        frames = [f for f in self.make_frames(200) if f.frame_index != 50]
        seqs, drops = segment_attack_sequences(events, frames)
        assert not seqs
        assert drops and drops[0].reason.startswith("event referenced a missing frame")

    def test_every_pass_covered_exactly_once(self, rng):
        teams = rng.choice(["A", "B"], size=60, p=[0.7, 0.3])
        events = [ev(str(i), "pass", 10 + 15 * i, t) for i, t in enumerate(teams)]
        seqs, drops = segment_attack_sequences(events, self.make_frames(1200))
        seen: list[str] = []
        for s in seqs:
            seen.extend(s.event_ids)
        for d in drops:
            seen.extend(d.event_ids)
        assert sorted(seen) == sorted(str(i) for i in range(60))
        assert len(set(seen)) == 60

    def test_same_team_spans_never_overlap(self, rng):
        teams = rng.choice(["A", "B"], size=80)
        events = [ev(str(i), "pass", 10 + 12 * i, t) for i, t in enumerate(teams)]
        seqs, _ = segment_attack_sequences(events, self.make_frames(1200))
        for team in ("A", "B"):
            spans = sorted(
                (s.start_frame, s.end_frame) for s in seqs if s.team_id == team
            )
            for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
                assert e1 < s2

    def test_sequence_invariant_start_le_end(self):
        with pytest.raises(ValueError):
            AttackSequence("s", "A", 10, 5, ())

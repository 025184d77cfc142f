import numpy as np
import pytest

from pitchspace.dominance import ATTACKING, DEFENDING, PlayerState
from pitchspace.match_io import Ball, FrameMetadata, TrackedFrame
from pitchspace.pitch import Point2


def make_frame(players, ball_pos=(0.0, 0.0), ball_vel=(0.0, 0.0), frame_index=0, time=0.0):
    return TrackedFrame(
        frame_index=frame_index,
        time=time,
        ball=Ball(Point2(*ball_pos), Point2(*ball_vel)),
        players=tuple(players),
        metadata=FrameMetadata(),
    )


def player(pid, team, x, y, vx=0.0, vy=0.0):
    return PlayerState(pid, team, Point2(x, y), Point2(vx, vy))


def random_frame(rng, n_attackers=11, n_defenders=11, speed=3.0, ball_pos=(40.0, 0.0)):
    """Players scattered over the pitch with bounded random velocities."""
    players = []
    for i in range(n_attackers):
        players.append(
            player(
                f"A{i:02d}", ATTACKING,
                rng.uniform(-50, 50), rng.uniform(-31, 31),
                rng.uniform(-speed, speed), rng.uniform(-speed, speed),
            )
        )
    for i in range(n_defenders):
        players.append(
            player(
                f"B{i:02d}", DEFENDING,
                rng.uniform(-50, 50), rng.uniform(-31, 31),
                rng.uniform(-speed, speed), rng.uniform(-speed, speed),
            )
        )
    return make_frame(players, ball_pos=ball_pos)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

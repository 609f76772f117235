"""Mechanical service-time model: seek + rotational wait + transfer.

The head state advances through every component, so the rotational wait of
one op depends on where the previous op left the platter.  All tracks share
the same angular origin (no skew); block ``k`` of an ``n``-block track
starts at angle ``k / n`` revolutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

from .errors import ConfigError

# angles closer than this to a full turn count as "already there"; keeps
# float drift from turning a zero wait into a whole revolution
_ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class MechanicalModel:
    total_tracks: int
    rpm: float = 5400.0
    seek_settle: float = 1.0          # ms
    full_stroke_seek: float = 20.0    # ms

    def __post_init__(self):
        if self.rpm <= 0:
            raise ConfigError(f"rpm must be positive, got {self.rpm}")
        if not 0 <= self.seek_settle <= self.full_stroke_seek:
            raise ConfigError("need 0 <= seek_settle <= full_stroke_seek")
        if self.total_tracks < 1:
            raise ConfigError("total_tracks must be at least 1")

    @property
    def revolution_time(self) -> float:
        return 60000.0 / self.rpm

    def seek_time(self, track_distance: int) -> float:
        if track_distance < 0:
            raise ValueError("track distance must be non-negative")
        if track_distance == 0:
            return 0.0
        if self.total_tracks <= 1:
            return self.seek_settle
        span = self.full_stroke_seek - self.seek_settle
        return self.seek_settle + span * track_distance / (self.total_tracks - 1)


@dataclass
class HeadState:
    current_track: int = 0
    angular_position: float = 0.0     # revolutions, [0, 1)
    clock: float = 0.0                # ms since simulation start

    def advance(self, dt: float, revolution_time: float) -> None:
        self.clock += dt
        self.angular_position = (self.angular_position + dt / revolution_time) % 1.0

    def copy(self) -> "HeadState":
        return HeadState(self.current_track, self.angular_position, self.clock)


class TrackLayout(Protocol):
    tracks_per_zone: int

    def track_size(self, track_offset: int) -> int: ...


def rotational_wait(angle: float, target: float, revolution_time: float) -> float:
    gap = (target - angle) % 1.0
    if gap > 1.0 - _ANGLE_EPS or gap < _ANGLE_EPS:
        return 0.0
    return gap * revolution_time


def service(ops: Iterable, head: HeadState, model: MechanicalModel,
            layout: TrackLayout) -> float:
    """Run ``ops`` in order against ``head``; return the elapsed ms.

    ``head`` is updated in place.
    """
    rev = model.revolution_time
    total = 0.0
    for op in ops:
        track = op.zone_id * layout.tracks_per_zone + op.track_offset
        blocks = layout.track_size(op.track_offset)

        seek = model.seek_time(abs(track - head.current_track))
        head.advance(seek, rev)
        head.current_track = track

        # snap the angle to the exact block boundary after each positioning
        # step instead of accumulating float increments
        start = op.block_offset / blocks
        wait = rotational_wait(head.angular_position, start, rev)
        head.clock += wait
        head.angular_position = start

        transfer = op.length * rev / blocks
        head.clock += transfer
        head.angular_position = ((op.block_offset + op.length) % blocks) / blocks
        total += seek + wait + transfer
    return total

"""Interlaced track layout and block address translation.

A zone is a run of ``tracks_per_zone`` physical tracks that alternate
bottom/top, starting with a bottom track at offset 0.  Bottom tracks are
wider and hold more blocks than top tracks.  Inside a zone the canonical
block ordering walks track 0 first, then track 1, and so on, so an in-zone
block offset (``nbo``) identifies a (track, block) pair uniquely.

Zones are isolated: a top track never overlaps a bottom track of another
zone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

from .errors import AddressError, ConfigError, InvalidTripleError, LogicError


class TrackKind(enum.Enum):
    BOTTOM = "bottom"
    TOP = "top"


class BlockTriple(NamedTuple):
    zone_id: int
    track_offset: int
    block_offset: int


@dataclass(frozen=True)
class DiskGeometry:
    zone_count: int
    block_size_bytes: int = 4096
    blocks_per_bottom_track: int = 568
    blocks_per_top_track: int = 456
    tracks_per_zone: int = 20

    def __post_init__(self):
        for name in ("zone_count", "block_size_bytes", "blocks_per_bottom_track",
                     "blocks_per_top_track", "tracks_per_zone"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.tracks_per_zone % 2:
            raise ConfigError(
                f"tracks_per_zone must be even (bottom/top pairs), got {self.tracks_per_zone}")
        if self.blocks_per_bottom_track <= self.blocks_per_top_track:
            raise ConfigError("bottom tracks must hold more blocks than top tracks")

    @classmethod
    def for_capacity(cls, capacity_bytes: int, **overrides) -> "DiskGeometry":
        """Largest whole-zone geometry that fits in ``capacity_bytes``.

        Trailing space smaller than one zone is left unaddressable.
        """
        probe = cls(zone_count=1, **overrides)
        zone_bytes = probe.zone_capacity * probe.block_size_bytes
        zones = capacity_bytes // zone_bytes
        if zones < 1:
            raise ConfigError(
                f"capacity {capacity_bytes} B is smaller than one zone ({zone_bytes} B)")
        return cls(zone_count=zones, **overrides)

    @cached_property
    def pair_blocks(self) -> int:
        return self.blocks_per_bottom_track + self.blocks_per_top_track

    @cached_property
    def zone_capacity(self) -> int:
        return (self.tracks_per_zone // 2) * self.pair_blocks

    @cached_property
    def capacity_blocks(self) -> int:
        return self.zone_count * self.zone_capacity

    @cached_property
    def capacity_bytes(self) -> int:
        return self.capacity_blocks * self.block_size_bytes

    @cached_property
    def total_tracks(self) -> int:
        return self.zone_count * self.tracks_per_zone

    @cached_property
    def bottom_blocks_per_zone(self) -> int:
        return (self.tracks_per_zone // 2) * self.blocks_per_bottom_track

    @property
    def stage_boundary(self) -> float:
        """Utilization at which every bottom block is allocated."""
        return self.blocks_per_bottom_track / self.pair_blocks

    # -- per-track helpers -------------------------------------------------

    def _check_track(self, track_offset: int) -> None:
        if not 0 <= track_offset < self.tracks_per_zone:
            raise InvalidTripleError(
                f"track offset {track_offset} outside [0, {self.tracks_per_zone})")

    def track_kind(self, track_offset: int) -> TrackKind:
        self._check_track(track_offset)
        return TrackKind.BOTTOM if track_offset % 2 == 0 else TrackKind.TOP

    def track_size(self, track_offset: int) -> int:
        return (self.blocks_per_bottom_track if track_offset % 2 == 0
                else self.blocks_per_top_track)

    @cached_property
    def _track_starts(self) -> tuple[int, ...]:
        return tuple((t // 2) * self.pair_blocks + (t % 2) * self.blocks_per_bottom_track
                     for t in range(self.tracks_per_zone))

    def track_start(self, track_offset: int) -> int:
        """Canonical in-zone offset of the first block of a track."""
        return self._track_starts[track_offset]

    def top_neighbors(self, bottom_track_offset: int) -> list[int]:
        if self.track_kind(bottom_track_offset) is not TrackKind.BOTTOM:
            raise LogicError(f"track {bottom_track_offset} is a top track")
        return [t for t in (bottom_track_offset - 1, bottom_track_offset + 1)
                if 0 <= t < self.tracks_per_zone]

    def adjacent_top_block(self, bottom_block_offset: int) -> int:
        """Block of a neighbouring top track that overlaps a bottom block.

        Blocks are aligned by angle, so the bottom block's angular start
        is scaled onto the shorter top track.
        """
        if not 0 <= bottom_block_offset < self.blocks_per_bottom_track:
            raise InvalidTripleError(f"bottom block offset {bottom_block_offset} out of range")
        return bottom_block_offset * self.blocks_per_top_track // self.blocks_per_bottom_track

    # -- in-zone translation -------------------------------------------------

    def split_offset(self, nbo: int) -> tuple[int, int]:
        """In-zone offset -> (track_offset, block_offset)."""
        if not 0 <= nbo < self.zone_capacity:
            raise AddressError(f"in-zone offset {nbo} outside [0, {self.zone_capacity})")
        pairs, rem = divmod(nbo, self.pair_blocks)
        if rem < self.blocks_per_bottom_track:
            return 2 * pairs, rem
        return 2 * pairs + 1, rem - self.blocks_per_bottom_track

    def join_offset(self, track_offset: int, block_offset: int) -> int:
        self._check_track(track_offset)
        if not 0 <= block_offset < self.track_size(track_offset):
            raise InvalidTripleError(
                f"block offset {block_offset} outside track {track_offset} "
                f"of {self.track_size(track_offset)} blocks")
        return self.track_start(track_offset) + block_offset

    # -- whole-device translation ------------------------------------------

    def at(self, flat_address: int) -> BlockTriple:
        if not 0 <= flat_address < self.capacity_blocks:
            raise AddressError(
                f"block address {flat_address} outside [0, {self.capacity_blocks})")
        zone_id, nbo = divmod(flat_address, self.zone_capacity)
        return BlockTriple(zone_id, *self.split_offset(nbo))

    def at_inverse(self, triple: BlockTriple) -> int:
        zone_id, track_offset, block_offset = triple
        if not 0 <= zone_id < self.zone_count:
            raise InvalidTripleError(f"zone {zone_id} outside [0, {self.zone_count})")
        return zone_id * self.zone_capacity + self.join_offset(track_offset, block_offset)


@dataclass(frozen=True)
class CmrLayout:
    """Conventional layout used by the CMR baseline.

    Every track holds ``track_blocks`` blocks and LBA equals PBA.  Tracks are
    grouped ``tracks_per_zone`` at a time only so that physical ops can carry
    the same (zone, track, block) coordinates as the interlaced layout.
    """

    capacity_blocks: int
    track_blocks: int = 568
    tracks_per_zone: int = 20

    @classmethod
    def matching(cls, geometry: DiskGeometry) -> "CmrLayout":
        return cls(geometry.capacity_blocks, geometry.blocks_per_bottom_track,
                   geometry.tracks_per_zone)

    @cached_property
    def total_tracks(self) -> int:
        return -(-self.capacity_blocks // self.track_blocks)

    def track_size(self, track_offset: int) -> int:
        return self.track_blocks

    def locate(self, pba: int) -> BlockTriple:
        if not 0 <= pba < self.capacity_blocks:
            raise AddressError(f"block address {pba} outside [0, {self.capacity_blocks})")
        track, block = divmod(pba, self.track_blocks)
        zone_id, track_offset = divmod(track, self.tracks_per_zone)
        return BlockTriple(zone_id, track_offset, block)

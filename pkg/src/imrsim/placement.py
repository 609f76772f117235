"""Request dispatch, read-modify-write updates and the simulated device.

A write is resolved block by block through the mapping table (allocate and
bind on a miss), then emitted as runs of physically contiguous blocks on
one track.  A run on a bottom track whose overlapping top blocks hold valid
data becomes a read-modify-write: back up those top blocks, write the run,
write the backups back.

The block store models the physics that makes RMW necessary: writing a
bottom block garbles the valid top blocks it overlaps.  If the op sequence
ever forgets a restore, the damage stays visible to later reads.
"""

from __future__ import annotations

import base64
import enum
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import DeviceConfig, Mode
from .errors import AddressError, LogicError, ZoneFullError
from .geometry import BlockTriple, DiskGeometry
from .latency import HeadState, service
from .mapping import AllocationStrategy, MappingTable, ZoneUtilization
from .stats import SimStats

# content left in a top block that was overwritten by its bottom neighbour
DAMAGED = b"\xffIMR-DAMAGED-TOP-BLOCK\xff"


class Direction(enum.Enum):
    READ = "read"
    WRITE = "write"


class OpKind(enum.Enum):
    MEDIA_READ = "media-read"
    MEDIA_WRITE = "media-write"


class UpdateStrategy(enum.Enum):
    """How a bottom-track update protects its top neighbours.  Only RMW
    ships; read-swap-write or move-on-modify would plug in here."""
    RMW = "rmw"


class Cause(enum.Enum):
    HOST = "host"
    RMW_BACKUP_READ = "rmw-backup-read"
    RMW_RESTORE_WRITE = "rmw-restore-write"


@dataclass(frozen=True)
class IoRequest:
    direction: Direction
    lba: int
    length: int = 1
    issue_time: float | None = None   # us since trace start

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"request length must be >= 1, got {self.length}")

    @classmethod
    def read(cls, lba: int, length: int = 1) -> "IoRequest":
        return cls(Direction.READ, lba, length)

    @classmethod
    def write(cls, lba: int, length: int = 1) -> "IoRequest":
        return cls(Direction.WRITE, lba, length)


@dataclass(frozen=True)
class PhysicalOp:
    kind: OpKind
    zone_id: int
    track_offset: int
    block_offset: int
    length: int
    cause: Cause = Cause.HOST

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "zone": self.zone_id, "track": self.track_offset,
                "block": self.block_offset, "length": self.length, "cause": self.cause.value}


def media_read(zone, track, block, length=1, cause=Cause.HOST) -> PhysicalOp:
    return PhysicalOp(OpKind.MEDIA_READ, zone, track, block, length, cause)


def media_write(zone, track, block, length=1, cause=Cause.HOST) -> PhysicalOp:
    return PhysicalOp(OpKind.MEDIA_WRITE, zone, track, block, length, cause)


@dataclass
class Completion:
    ops: list[PhysicalOp]
    service_ms: float
    data: list[bytes] | None = None


class BlockStore:
    """Sparse payload store keyed by flat physical block address.

    Payloads are kept with trailing zero bytes stripped; absent blocks
    read back as all zeros.
    """

    def __init__(self, block_size: int):
        self.block_size = block_size
        self._blocks: dict[int, bytes] = {}

    def __len__(self):
        return len(self._blocks)

    def raw(self, pba: int) -> bytes | None:
        return self._blocks.get(pba)

    def put_raw(self, pba: int, payload: bytes | None) -> None:
        if payload:
            self._blocks[pba] = payload
        else:
            self._blocks.pop(pba, None)

    def write(self, pba: int, payload: bytes | None) -> None:
        if payload is not None and len(payload) > self.block_size:
            raise ValueError(f"payload of {len(payload)} B exceeds block size {self.block_size}")
        self.put_raw(pba, payload.rstrip(b"\0") if payload else None)

    def damage(self, pba: int) -> None:
        self._blocks[pba] = DAMAGED

    def read(self, pba: int) -> bytes:
        return self._blocks.get(pba, b"").ljust(self.block_size, b"\0")

    def export_state(self) -> dict:
        return {str(pba): base64.b64encode(data).decode("ascii")
                for pba, data in sorted(self._blocks.items())}

    @classmethod
    def from_state(cls, block_size: int, state: dict) -> "BlockStore":
        store = cls(block_size)
        for key, encoded in state.items():
            store.put_raw(int(key), base64.b64decode(encoded))
        return store


def _coalesce(zone: int, blocks: Sequence[tuple[int, int]], factory, cause) -> list[PhysicalOp]:
    """Sorted (track, block) pairs -> same-track contiguous runs."""
    ops: list[PhysicalOp] = []
    start = prev = None
    for track, block in blocks:
        if prev is not None and track == prev[0] and block == prev[1] + 1:
            prev = (track, block)
            continue
        if start is not None:
            ops.append(factory(zone, start[0], start[1], prev[1] - start[1] + 1, cause))
        start = prev = (track, block)
    if start is not None:
        ops.append(factory(zone, start[0], start[1], prev[1] - start[1] + 1, cause))
    return ops


class Device:
    """One simulated drive: placement, media contents, head and counters.

    Requests must be issued serially; the device does no locking.
    """

    def __init__(self, config: DeviceConfig | None = None):
        self.config = config or DeviceConfig()
        self.geometry: DiskGeometry = self.config.geometry()
        self.layout = self.config.layout()
        self.model = self.config.model()
        self.mode = self.config.mode
        self.mapping = MappingTable(self.geometry, self.config.strategy)
        self.store = BlockStore(self.geometry.block_size_bytes)
        # CMR bookkeeping of written LBAs, only for utilization
        self._written = bytearray(self.geometry.capacity_blocks) if self.mode is Mode.CMR else None
        self._written_count = 0
        self.head = HeadState()
        self.stats = SimStats()
        self.request_count = 0
        self.checkpoint_sequence = 0
        self.update_strategy = UpdateStrategy.RMW
        self._update_paths = {UpdateStrategy.RMW: self.rmw_update}
        self._observers: list[Callable] = []

    # -- configuration -----------------------------------------------------

    @property
    def capacity_blocks(self) -> int:
        return self.geometry.capacity_blocks

    @property
    def strategy(self) -> AllocationStrategy:
        return self.mapping.strategy

    def set_strategy(self, strategy: AllocationStrategy) -> None:
        """Switch allocation order for future allocations only."""
        self.mapping.strategy = strategy
        self.config = self.config.replace(strategy=strategy)

    def add_observer(self, callback: Callable) -> None:
        self._observers.append(callback)

    def remove_observer(self, callback: Callable) -> None:
        self._observers.remove(callback)

    def reset_stats(self) -> None:
        self.stats = SimStats()

    # -- queries -----------------------------------------------------------

    def utilization(self, zone_id: int | None = None) -> ZoneUtilization:
        if self.mode is Mode.IMR:
            return self.mapping.utilization(zone_id)
        if zone_id is None:
            return ZoneUtilization(self._written_count, self.capacity_blocks)
        cap = self.geometry.zone_capacity
        return ZoneUtilization(sum(self._written[zone_id * cap:(zone_id + 1) * cap]), cap)

    def is_mapped(self, lba: int) -> bool:
        self._check_range(lba, 1)
        if self.mode is Mode.CMR:
            return bool(self._written[lba])
        zone, bo = divmod(lba, self.geometry.zone_capacity)
        return self.mapping.lookup(zone, bo) is not None

    def physical_address(self, lba: int) -> BlockTriple | None:
        """Where ``lba`` currently lives, or None if never written."""
        self._check_range(lba, 1)
        if self.mode is Mode.CMR:
            return self.layout.locate(lba) if self._written[lba] else None
        zone, bo = divmod(lba, self.geometry.zone_capacity)
        nbo = self.mapping.lookup(zone, bo)
        if nbo is None:
            return None
        return BlockTriple(zone, *self.geometry.split_offset(nbo))

    def _check_range(self, lba: int, length: int) -> None:
        if lba < 0 or length < 1 or lba + length > self.capacity_blocks:
            raise AddressError(
                f"blocks [{lba}, {lba + length}) outside device of {self.capacity_blocks} blocks")

    def _pba(self, zone: int, track: int, block: int) -> int:
        if self.mode is Mode.CMR:
            return (zone * self.layout.tracks_per_zone + track) * self.layout.track_blocks + block
        return zone * self.geometry.zone_capacity + self.geometry.track_start(track) + block

    # -- request path --------------------------------------------------------

    def handle_request(self, request: IoRequest,
                       data: Sequence[bytes | None] | None = None) -> list[PhysicalOp]:
        """Place one request and apply it to the media; return the op list."""
        return self._dispatch(request, data)[0]

    def submit(self, request: IoRequest,
               data: Sequence[bytes | None] | None = None) -> Completion:
        """Place, time and account one request."""
        ops, payload = self._dispatch(request, data)
        ms = service(ops, self.head, self.model, self.layout)
        self.stats.record(ops, request.direction, ms)
        self.request_count += 1
        for observer in list(self._observers):
            observer(request, ops)
        return Completion(ops, ms, payload)

    def _dispatch(self, request, data):
        self._check_range(request.lba, request.length)
        if data is not None and len(data) != request.length:
            raise ValueError(f"expected {request.length} payloads, got {len(data)}")
        if request.direction is Direction.READ:
            return self._read(request)
        if self.mode is Mode.CMR:
            return self.mode_cmr(request, data), None
        return self._write(request, data), None

    def _read(self, request):
        g = self.geometry
        blocks = []
        payload = []
        for lba in range(request.lba, request.lba + request.length):
            where = self.physical_address(lba)
            if where is None:
                # unwritten: head still travels to the identity location
                where = g.at(lba) if self.mode is Mode.IMR else self.layout.locate(lba)
                payload.append(bytes(g.block_size_bytes))
            else:
                payload.append(self.store.read(self._pba(*where)))
            blocks.append(where)
        ops = [media_read(*run[0], len(run)) for run in self._runs(blocks)]
        return ops, payload

    @staticmethod
    def _runs(items):
        """Group consecutive (zone, track, block, ...) items into runs that are
        contiguous on one track."""
        run: list = []
        for item in items:
            if run:
                last = run[-1]
                if item[0] == last[0] and item[1] == last[1] and item[2] == last[2] + 1:
                    run.append(item)
                    continue
                yield run
            run = [item]
        if run:
            yield run

    def mode_cmr(self, request: IoRequest,
                 data: Sequence[bytes | None] | None = None) -> list[PhysicalOp]:
        """CMR baseline write: identity mapping, in-place, never RMW."""
        if self.mode is not Mode.CMR:
            raise LogicError("mode_cmr called on an IMR device")
        self._check_range(request.lba, request.length)
        lbas = range(request.lba, request.lba + request.length)
        ops = [media_write(*run[0], len(run))
               for run in self._runs(self.layout.locate(lba) for lba in lbas)]
        for k, lba in enumerate(lbas):
            self.store.write(lba, data[k] if data is not None else None)
            if not self._written[lba]:
                self._written[lba] = 1
                self._written_count += 1
        return ops

    def _write(self, request, data):
        g, mt = self.geometry, self.mapping
        cap = g.zone_capacity
        lbas = range(request.lba, request.lba + request.length)

        # validate before mutating anything
        needed = Counter()
        for lba in lbas:
            zone, bo = divmod(lba, cap)
            if mt.lookup(zone, bo) is None:
                needed[zone] += 1
        for zone, count in needed.items():
            if count > mt.free_blocks(zone):
                raise ZoneFullError(f"zone {zone} cannot take {count} more blocks")

        resolved = []    # (zone, track, block, valid adjacent (track, block) pairs)
        payloads = {}
        for k, lba in enumerate(lbas):
            zone, bo = divmod(lba, cap)
            nbo = mt.lookup(zone, bo)
            if nbo is None:
                nbo = mt.allocate(zone)
                mt.bind(zone, bo, nbo)
            track, block = g.split_offset(nbo)
            resolved.append((zone, track, block, self._valid_neighbors(zone, track, block)))
            payloads[zone * cap + nbo] = data[k] if data is not None else None

        ops: list[PhysicalOp] = []
        for run in self._runs(resolved):
            ops.extend(self._emit_run(run))
        self._execute(ops, payloads)
        return ops

    def _valid_neighbors(self, zone, track, block):
        if track % 2:
            return ()
        g = self.geometry
        j = g.adjacent_top_block(block)
        return tuple((t, j) for t in g.top_neighbors(track)
                     if self.mapping.is_valid(zone, g.track_start(t) + j))

    def _emit_run(self, run):
        zone, track, first, _ = run[0]
        backups = set()
        for entry in run:
            backups.update(entry[3])
        if not backups:
            return [media_write(zone, track, first, len(run))]
        update = self._update_paths[self.update_strategy]
        return update(BlockTriple(zone, track, first), len(run), sorted(backups))

    def rmw_update(self, target: BlockTriple, length: int = 1,
                   backups: Sequence[tuple[int, int]] | None = None) -> list[PhysicalOp]:
        """Op sequence for rewriting a bottom run whose top neighbours hold data.

        Order: backup reads, the target write, restore writes.  ``backups``
        defaults to every valid top block overlapping the run.  This only
        builds the sequence; media contents change when the ops execute.
        """
        zone, track, first = target
        g = self.geometry
        if track % 2:
            raise LogicError(f"RMW target track {track} is a top track")
        if backups is None:
            backups = sorted({pair for b in range(first, first + length)
                              for pair in self._valid_neighbors(zone, track, b)})
        if not backups:
            raise LogicError("RMW requested but no adjacent top block is valid")
        if first + length > g.blocks_per_bottom_track:
            raise LogicError("RMW run crosses the end of its track")
        return (_coalesce(zone, backups, media_read, Cause.RMW_BACKUP_READ)
                + [media_write(zone, track, first, length)]
                + _coalesce(zone, backups, media_write, Cause.RMW_RESTORE_WRITE))

    def _execute(self, ops, payloads):
        """Apply an IMR write op sequence to the block store."""
        g = self.geometry
        backup: dict[int, bytes | None] = {}
        for op in ops:
            for k in range(op.length):
                block = op.block_offset + k
                pba = self._pba(op.zone_id, op.track_offset, block)
                if op.kind is OpKind.MEDIA_READ:
                    if op.cause is Cause.RMW_BACKUP_READ:
                        backup[pba] = self.store.raw(pba)
                elif op.cause is Cause.RMW_RESTORE_WRITE:
                    if pba not in backup:
                        raise LogicError(f"restore of block {pba} without a backup")
                    self.store.put_raw(pba, backup.pop(pba))
                else:
                    self.store.write(pba, payloads[pba])
                    if op.track_offset % 2 == 0:
                        j = g.adjacent_top_block(block)
                        for t in g.top_neighbors(op.track_offset):
                            nbo = g.track_start(t) + j
                            if self.mapping.is_valid(op.zone_id, nbo):
                                self.store.damage(op.zone_id * g.zone_capacity + nbo)

    # -- persistence ---------------------------------------------------------

    def export_state(self) -> dict:
        g = self.geometry
        state = {
            "config": self.config.to_dict(),
            "geometry": {"zone_count": g.zone_count, "zone_capacity": g.zone_capacity,
                         "capacity_blocks": g.capacity_blocks,
                         "total_tracks": self.layout.total_tracks},
            "head": {"track": self.head.current_track,
                     "angle": self.head.angular_position, "clock": self.head.clock},
            "stats": self.stats.to_dict(),
            "request_count": self.request_count,
            "store": self.store.export_state(),
        }
        if self.mode is Mode.IMR:
            state["mapping"] = self.mapping.export_state()
        else:
            state["written"] = _ranges(self._written)
        return state

    @classmethod
    def from_state(cls, state: dict) -> "Device":
        device = cls(DeviceConfig.from_dict(state["config"]))
        g = device.geometry
        echo = state["geometry"]
        if (echo["zone_count"], echo["zone_capacity"]) != (g.zone_count, g.zone_capacity):
            raise LogicError("geometry echo does not match the stored configuration")
        head = state["head"]
        device.head = HeadState(int(head["track"]), float(head["angle"]), float(head["clock"]))
        device.stats = SimStats.from_dict(state["stats"])
        device.request_count = int(state["request_count"])
        device.store = BlockStore.from_state(g.block_size_bytes, state["store"])
        if device.mode is Mode.IMR:
            device.mapping = MappingTable.from_state(g, state["mapping"])
        else:
            for start, stop in state["written"]:
                device._written[start:stop] = b"\x01" * (stop - start)
            device._written_count = sum(stop - start for start, stop in state["written"])
        return device


def _ranges(flags: bytearray) -> list[list[int]]:
    """[start, stop) runs of non-zero bytes."""
    padded = np.concatenate(([0], np.frombuffer(bytes(flags), dtype=np.uint8) != 0, [0]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [[int(a), int(b)] for a, b in zip(edges[0::2], edges[1::2])]

"""Per-zone logical->physical block mapping and multi-stage allocation."""

from __future__ import annotations

import enum
from array import array
from dataclasses import dataclass
from functools import lru_cache

from .errors import AddressError, LogicError, ZoneFullError
from .geometry import DiskGeometry

UNMAPPED = -1


class AllocationStrategy(enum.Enum):
    TWO_STAGE = "two-stage"
    THREE_STAGE = "three-stage"

    @classmethod
    def parse(cls, text: str) -> "AllocationStrategy":
        key = text.strip().lower().replace("_", "-")
        aliases = {"2": "two-stage", "two": "two-stage", "3": "three-stage",
                   "three": "three-stage", "two-phase": "two-stage",
                   "three-phase": "three-stage"}
        return cls(aliases.get(key, key))


def stage_track_order(geometry: DiskGeometry, strategy: AllocationStrategy) -> list[int]:
    """Physical tracks of a zone in the order the strategy fills them."""
    bottom = list(range(0, geometry.tracks_per_zone, 2))
    top = list(range(1, geometry.tracks_per_zone, 2))
    if strategy is AllocationStrategy.TWO_STAGE:
        return bottom + top
    # every other top track first, so each bottom track gains at most one
    # valid neighbour before the last stage starts
    return bottom + top[0::2] + top[1::2]


@lru_cache(maxsize=16)
def allocation_order(geometry: DiskGeometry, strategy: AllocationStrategy) -> array:
    order = array("i")
    for track in stage_track_order(geometry, strategy):
        start = geometry.track_start(track)
        order.extend(range(start, start + geometry.track_size(track)))
    return order


@dataclass(frozen=True)
class ZoneUtilization:
    mapped_blocks: int
    capacity: int

    @property
    def fraction(self) -> float:
        return self.mapped_blocks / self.capacity if self.capacity else 0.0


class _Zone:
    __slots__ = ("forward", "reverse", "cursor", "mapped")

    def __init__(self, capacity: int):
        self.forward = array("i", [UNMAPPED]) * capacity
        self.reverse = array("i", [UNMAPPED]) * capacity
        self.cursor = 0
        self.mapped = 0


class MappingTable:
    """bo -> nbo map per zone, with the reverse map defining validity.

    Zones are materialised on first write, so an untouched 128 GiB device
    costs nothing.  Physical blocks are never released (no garbage
    collection), which is what lets ``allocate`` skip already-bound blocks
    after a strategy switch.
    """

    def __init__(self, geometry: DiskGeometry,
                 strategy: AllocationStrategy = AllocationStrategy.TWO_STAGE):
        self.geometry = geometry
        self._zone_count = geometry.zone_count
        self._capacity = geometry.zone_capacity
        self._strategy = strategy
        self._order = allocation_order(geometry, strategy)
        self._zones: dict[int, _Zone] = {}

    @property
    def strategy(self) -> AllocationStrategy:
        return self._strategy

    @strategy.setter
    def strategy(self, strategy: AllocationStrategy) -> None:
        # existing bindings stay where they are; future allocations walk the
        # new order from its start and skip blocks that are already taken
        if strategy is self._strategy:
            return
        self._strategy = strategy
        self._order = allocation_order(self.geometry, strategy)
        for zone in self._zones.values():
            zone.cursor = 0

    def _check(self, zone_id: int, offset: int, what: str) -> None:
        if not 0 <= zone_id < self._zone_count:
            raise AddressError(f"zone {zone_id} outside [0, {self._zone_count})")
        if not 0 <= offset < self._capacity:
            raise AddressError(f"{what} {offset} outside [0, {self._capacity})")

    def _zone(self, zone_id: int) -> _Zone:
        zone = self._zones.get(zone_id)
        if zone is None:
            zone = self._zones[zone_id] = _Zone(self.geometry.zone_capacity)
        return zone

    def lookup(self, zone_id: int, bo: int) -> int | None:
        self._check(zone_id, bo, "block offset")
        zone = self._zones.get(zone_id)
        if zone is None:
            return None
        nbo = zone.forward[bo]
        return None if nbo == UNMAPPED else nbo

    def reverse_lookup(self, zone_id: int, nbo: int) -> int | None:
        self._check(zone_id, nbo, "physical offset")
        zone = self._zones.get(zone_id)
        if zone is None:
            return None
        bo = zone.reverse[nbo]
        return None if bo == UNMAPPED else bo

    def is_valid(self, zone_id: int, nbo: int) -> bool:
        return self.reverse_lookup(zone_id, nbo) is not None

    def free_blocks(self, zone_id: int) -> int:
        zone = self._zones.get(zone_id)
        return self.geometry.zone_capacity - (zone.mapped if zone else 0)

    def allocate(self, zone_id: int) -> int:
        self._check(zone_id, 0, "block offset")
        zone = self._zone(zone_id)
        order, reverse = self._order, zone.reverse
        cursor = zone.cursor
        while cursor < len(order) and reverse[order[cursor]] != UNMAPPED:
            cursor += 1
        if cursor >= len(order):
            zone.cursor = cursor
            raise ZoneFullError(f"zone {zone_id} has no free physical block")
        zone.cursor = cursor + 1
        return order[cursor]

    def bind(self, zone_id: int, bo: int, nbo: int) -> None:
        self._check(zone_id, bo, "block offset")
        self._check(zone_id, nbo, "physical offset")
        zone = self._zone(zone_id)
        if zone.forward[bo] != UNMAPPED:
            raise LogicError(f"zone {zone_id}: bo {bo} already bound to {zone.forward[bo]}")
        if zone.reverse[nbo] != UNMAPPED:
            raise LogicError(f"zone {zone_id}: nbo {nbo} already holds bo {zone.reverse[nbo]}")
        zone.forward[bo] = nbo
        zone.reverse[nbo] = bo
        zone.mapped += 1

    def cursor(self, zone_id: int) -> int:
        zone = self._zones.get(zone_id)
        return zone.cursor if zone else 0

    def utilization(self, zone_id: int | None = None) -> ZoneUtilization:
        if zone_id is None:
            mapped = sum(z.mapped for z in self._zones.values())
            return ZoneUtilization(mapped, self.geometry.capacity_blocks)
        self._check(zone_id, 0, "block offset")
        zone = self._zones.get(zone_id)
        return ZoneUtilization(zone.mapped if zone else 0, self.geometry.zone_capacity)

    def zones(self):
        """Ids of zones that hold at least one mapping, ascending."""
        return sorted(z for z, zone in self._zones.items() if zone.mapped)

    def entries(self, zone_id: int) -> list[tuple[int, int]]:
        zone = self._zones.get(zone_id)
        if zone is None:
            return []
        return [(bo, nbo) for bo, nbo in enumerate(zone.forward) if nbo != UNMAPPED]

    # -- checkpoint support ------------------------------------------------

    def export_state(self) -> dict:
        zones = {}
        for zone_id in sorted(self._zones):
            zone = self._zones[zone_id]
            pairs = self.entries(zone_id)
            zones[str(zone_id)] = {
                "cursor": zone.cursor,
                "bo": [bo for bo, _ in pairs],
                "nbo": [nbo for _, nbo in pairs],
            }
        return {"strategy": self._strategy.value, "zones": zones}

    @classmethod
    def from_state(cls, geometry: DiskGeometry, state: dict) -> "MappingTable":
        table = cls(geometry, AllocationStrategy(state["strategy"]))
        for key, entry in state["zones"].items():
            zone_id = int(key)
            if len(entry["bo"]) != len(entry["nbo"]):
                raise LogicError(f"zone {zone_id}: bo/nbo lists differ in length")
            for bo, nbo in zip(entry["bo"], entry["nbo"]):
                table.bind(zone_id, bo, nbo)
            cursor = int(entry["cursor"])
            if not 0 <= cursor <= geometry.zone_capacity:
                raise LogicError(f"zone {zone_id}: cursor {cursor} out of range")
            table._zone(zone_id).cursor = cursor
        return table

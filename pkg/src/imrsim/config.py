"""Device configuration and capacity parsing."""

from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .geometry import CmrLayout, DiskGeometry
from .latency import MechanicalModel
from .mapping import AllocationStrategy

GiB = 1 << 30

_UNITS = {"": 1, "b": 1, "k": 1000, "kb": 1000, "m": 1000**2, "mb": 1000**2,
          "g": 1000**3, "gb": 1000**3, "t": 1000**4, "tb": 1000**4,
          "kib": 1 << 10, "mib": 1 << 20, "gib": 1 << 30, "tib": 1 << 40}


def parse_size(text: str | int) -> int:
    """'128GiB' -> bytes.  Bare numbers are bytes."""
    if isinstance(text, int):
        return text
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in _UNITS:
        raise ConfigError(f"cannot parse size {text!r} (try e.g. 1GiB, 512MiB, 4096)")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


class Mode(enum.Enum):
    IMR = "imr"
    CMR = "cmr"


@dataclass(frozen=True)
class DeviceConfig:
    capacity_bytes: int = 128 * GiB
    block_size_bytes: int = 4096
    blocks_per_bottom_track: int = 568
    blocks_per_top_track: int = 456
    tracks_per_zone: int = 20
    mode: Mode = Mode.IMR
    strategy: AllocationStrategy = AllocationStrategy.TWO_STAGE
    rpm: float = 5400.0
    seek_settle: float = 1.0
    full_stroke_seek: float = 20.0
    flush_interval: int = 10000

    def __post_init__(self):
        try:
            if isinstance(self.mode, str):
                object.__setattr__(self, "mode", Mode(self.mode.lower()))
            if isinstance(self.strategy, str):
                object.__setattr__(self, "strategy", AllocationStrategy.parse(self.strategy))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.flush_interval < 1:
            raise ConfigError("flush_interval must be at least 1 request")
        # geometry and model constructors carry the remaining checks
        self.geometry()
        self.model()

    def geometry(self) -> DiskGeometry:
        return DiskGeometry.for_capacity(
            self.capacity_bytes,
            block_size_bytes=self.block_size_bytes,
            blocks_per_bottom_track=self.blocks_per_bottom_track,
            blocks_per_top_track=self.blocks_per_top_track,
            tracks_per_zone=self.tracks_per_zone,
        )

    def layout(self):
        geometry = self.geometry()
        return geometry if self.mode is Mode.IMR else CmrLayout.matching(geometry)

    def model(self):
        return MechanicalModel(total_tracks=self.layout().total_tracks, rpm=self.rpm,
                               seek_settle=self.seek_settle,
                               full_stroke_seek=self.full_stroke_seek)

    def replace(self, **changes) -> "DeviceConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["strategy"] = self.strategy.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if isinstance(data.get("capacity_bytes"), str):
            data["capacity_bytes"] = parse_size(data["capacity_bytes"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from None

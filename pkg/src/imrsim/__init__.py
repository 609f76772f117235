"""User-space simulator of an interlaced magnetic recording disk."""

from .config import DeviceConfig, Mode, parse_size
from .errors import (AddressError, ConfigError, ImrSimError, InvalidTripleError,
                     LogicError, NoDataError, RestoreError, TraceParseError,
                     ZoneFullError)
from .geometry import BlockTriple, CmrLayout, DiskGeometry, TrackKind
from .latency import HeadState, MechanicalModel, service
from .mapping import AllocationStrategy, MappingTable, ZoneUtilization
from .placement import (Cause, Completion, Device, Direction, IoRequest, OpKind,
                        PhysicalOp, UpdateStrategy)
from .stats import SimStats, checkpoint, restore

__version__ = "0.1.0"

__all__ = [
    "AddressError", "AllocationStrategy", "BlockTriple", "Cause", "CmrLayout",
    "Completion", "ConfigError", "Device", "DeviceConfig", "Direction", "DiskGeometry",
    "HeadState", "ImrSimError", "InvalidTripleError", "IoRequest", "LogicError",
    "MappingTable", "MechanicalModel", "Mode", "NoDataError", "OpKind", "PhysicalOp",
    "RestoreError", "SimStats", "TraceParseError", "TrackKind", "UpdateStrategy", "ZoneFullError",
    "ZoneUtilization", "checkpoint", "parse_size", "restore", "service",
]

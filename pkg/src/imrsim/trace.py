"""MSR-Cambridge trace ingestion and synthetic workload generation.

MSR lines look like::

    Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime
    128166372003061629,hm,0,Write,107520,24576,41116

Offsets and sizes are bytes.  Timestamps are kept but ignored for
scheduling: replay is closed-loop, one request at a time.
"""

from __future__ import annotations

import enum
import gzip
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, TraceParseError, UnknownOpTypeError
from .placement import Direction, IoRequest

log = logging.getLogger(__name__)

_OP_TYPES = {"read": Direction.READ, "write": Direction.WRITE}


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    host: str
    disk_number: int
    op_type: Direction
    offset_bytes: int
    size_bytes: int
    response_time: int | None = None


def _int_field(text: str, name: str, line_number) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise TraceParseError(f"{name} {text.strip()!r} is not an integer", line_number) from None
    if value < 0:
        raise TraceParseError(f"{name} must be non-negative, got {value}", line_number)
    return value


def parse_msr(line: str, line_number: int | None = None) -> TraceRecord:
    fields = line.strip().split(",")
    if len(fields) < 6:
        raise TraceParseError(f"expected at least 6 comma-separated fields, got {len(fields)}",
                              line_number)
    op = fields[3].strip().lower()
    if op not in _OP_TYPES:
        raise UnknownOpTypeError(f"unknown op type {fields[3].strip()!r}", line_number)
    size = _int_field(fields[5], "size", line_number)
    if size == 0:
        raise TraceParseError("size must be positive", line_number)
    response = None
    if len(fields) > 6 and fields[6].strip():
        response = _int_field(fields[6], "response time", line_number)
    return TraceRecord(
        timestamp=_int_field(fields[0], "timestamp", line_number),
        host=fields[1].strip(),
        disk_number=_int_field(fields[2], "disk number", line_number),
        op_type=_OP_TYPES[op],
        offset_bytes=_int_field(fields[4], "offset", line_number),
        size_bytes=size,
        response_time=response,
    )


def format_msr(record: TraceRecord) -> str:
    fields = [record.timestamp, record.host, record.disk_number,
              record.op_type.value.capitalize(), record.offset_bytes, record.size_bytes]
    if record.response_time is not None:
        fields.append(record.response_time)
    return ",".join(str(f) for f in fields)


@dataclass
class TraceReader:
    """Iterates records of an MSR file (plain or .gz), skipping unknown op types."""

    path: Path
    skipped: int = 0

    def __iter__(self) -> Iterator[TraceRecord]:
        path = Path(self.path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt") as fh:
            for number, line in enumerate(fh, 1):
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                try:
                    yield parse_msr(line, number)
                except UnknownOpTypeError as exc:
                    self.skipped += 1
                    log.warning("%s: %s, skipped", path, exc)


def to_requests(record: TraceRecord, block_size: int, capacity_blocks: int) -> list[IoRequest]:
    """Block-aligned requests covering the record's byte range.

    The start is aligned down and the end rounded up to whole blocks; the
    starting LBA wraps modulo the device size and a run that passes the end
    of the device continues at LBA 0.
    """
    first = record.offset_bytes // block_size
    last = -(-(record.offset_bytes + record.size_bytes) // block_size)
    remaining = last - first
    lba = first % capacity_blocks
    out = []
    while remaining:
        length = min(remaining, capacity_blocks - lba)
        out.append(IoRequest(record.op_type, lba, length, issue_time=record.timestamp))
        remaining -= length
        lba = 0
    return out


def replay_requests(path, block_size: int, capacity_blocks: int,
                    reader: TraceReader | None = None) -> Iterator[IoRequest]:
    reader = reader or TraceReader(Path(path))
    for record in reader:
        yield from to_requests(record, block_size, capacity_blocks)


# -- synthetic workloads --------------------------------------------------------

class WorkloadKind(enum.Enum):
    FILL_RANDOM = "fill-random"
    SEQUENTIAL = "sequential"
    RANDOM_UPDATE = "random-update"
    REPLAY = "replay"


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.FILL_RANDOM
    request_size_bytes: int = 32768
    target_utilization: float = 0.0
    seed: int = 0
    request_count: int = 0        # RANDOM_UPDATE only
    write_ratio: float = 1.0      # RANDOM_UPDATE only

    def __post_init__(self):
        if not 0.0 <= self.target_utilization <= 1.0:
            raise ConfigError(f"target utilization {self.target_utilization} outside [0, 1]")
        if not 0.0 <= self.write_ratio <= 1.0:
            raise ConfigError(f"write ratio {self.write_ratio} outside [0, 1]")
        if self.request_size_bytes <= 0:
            raise ConfigError("request size must be positive")


def _slot_blocks(spec: WorkloadSpec, device) -> int:
    block = device.geometry.block_size_bytes
    if spec.request_size_bytes % block:
        raise ConfigError(f"request size {spec.request_size_bytes} is not a multiple of "
                          f"the {block} B block size")
    return spec.request_size_bytes // block


def _slot_unmapped(device, lba: int, length: int) -> bool:
    return not any(device.is_mapped(b) for b in range(lba, lba + length))


def generate_fill(spec: WorkloadSpec, device) -> Iterator[IoRequest]:
    """Random aligned first-writes until the device reaches the target.

    Slots are drawn without replacement, so no logical block is written
    twice; slots that already hold data are skipped.  Utilization is
    tracked locally, so the stream is the same whether or not the caller
    submits requests while iterating.
    """
    if spec.kind is not WorkloadKind.FILL_RANDOM:
        raise ConfigError(f"generate_fill needs a fill-random spec, got {spec.kind.value}")
    slot = _slot_blocks(spec, device)
    capacity = device.capacity_blocks
    target = math.ceil(spec.target_utilization * capacity)
    mapped = device.utilization().mapped_blocks
    if mapped >= target:
        return
    order = np.random.default_rng(spec.seed).permutation(capacity // slot)
    for index in order.tolist():
        lba = index * slot
        if not _slot_unmapped(device, lba, slot):
            continue
        yield IoRequest.write(lba, slot)
        mapped += slot
        if mapped >= target:
            return


def generate_sequential(spec: WorkloadSpec, device, start_lba: int = 0) -> Iterator[IoRequest]:
    """Ascending aligned writes from ``start_lba`` until the target is reached."""
    slot = _slot_blocks(spec, device)
    capacity = device.capacity_blocks
    target = math.ceil(spec.target_utilization * capacity)
    mapped = device.utilization().mapped_blocks
    lba = start_lba
    while mapped < target and lba < capacity:
        length = min(slot, capacity - lba)
        fresh = sum(1 for b in range(lba, lba + length) if not device.is_mapped(b))
        yield IoRequest.write(lba, length)
        mapped += fresh
        lba += length


def generate_random_update(spec: WorkloadSpec, device) -> Iterator[IoRequest]:
    """Reads and overwrites of aligned slots that already hold data.

    The candidate slots are fixed when the generator starts; each request
    picks one uniformly and is a write with probability ``write_ratio``.
    """
    slot = _slot_blocks(spec, device)
    candidates = [s for s in range(device.capacity_blocks // slot)
                  if device.is_mapped(s * slot)]
    if not candidates:
        return
    rng = np.random.default_rng(spec.seed)
    picks = rng.integers(0, len(candidates), size=spec.request_count).tolist()
    writes = (rng.random(spec.request_count) < spec.write_ratio).tolist()
    for pick, is_write in zip(picks, writes):
        lba = candidates[pick] * slot
        yield IoRequest.write(lba, slot) if is_write else IoRequest.read(lba, slot)


def generate(spec: WorkloadSpec, device) -> Iterable[IoRequest]:
    if spec.kind is WorkloadKind.FILL_RANDOM:
        return generate_fill(spec, device)
    if spec.kind is WorkloadKind.SEQUENTIAL:
        return generate_sequential(spec, device)
    if spec.kind is WorkloadKind.RANDOM_UPDATE:
        return generate_random_update(spec, device)
    raise ConfigError("replay workloads are read from a trace file, see replay_requests")

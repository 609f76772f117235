"""Operation counters, write amplification and metadata checkpoints.

Checkpoint files are JSON documents::

    {"format": "imrsim-checkpoint", "version": 1,
     "sha256": "<hex digest of the canonical body>",
     "body": {"sequence": N, "device": {...}}}

The canonical body encoding is ``json.dumps(body, sort_keys=True,
separators=(",", ":"))``.  Files are named ``checkpoint-<seq>.json`` with a
zero-padded, strictly increasing sequence number and are written through a
temporary file plus rename, so a crash mid-write never replaces a good one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ImrSimError, NoDataError, RestoreError

log = logging.getLogger(__name__)

STATS_FORMAT = "imrsim-stats"
STATS_VERSION = 1
CHECKPOINT_FORMAT = "imrsim-checkpoint"
CHECKPOINT_VERSION = 1
_CHECKPOINT_RE = re.compile(r"checkpoint-(\d+)\.json$")


@dataclass
class SimStats:
    host_reads: int = 0
    host_writes: int = 0
    media_reads: int = 0
    media_writes: int = 0
    extra_reads: int = 0
    extra_writes: int = 0
    total_read_latency_ms: float = 0.0
    total_write_latency_ms: float = 0.0
    rmw_events: int = 0
    read_requests: int = 0
    write_requests: int = 0

    def record(self, ops, direction, service_ms: float) -> None:
        from .placement import Cause, Direction, OpKind

        in_backup = False
        for op in ops:
            if op.kind is OpKind.MEDIA_READ:
                self.media_reads += op.length
                if op.cause is Cause.HOST:
                    self.host_reads += op.length
                else:
                    self.extra_reads += op.length
            else:
                self.media_writes += op.length
                if op.cause is Cause.HOST:
                    self.host_writes += op.length
                else:
                    self.extra_writes += op.length
            # one RMW sequence opens with a run of backup reads
            backup = op.cause is Cause.RMW_BACKUP_READ
            if backup and not in_backup:
                self.rmw_events += 1
            in_backup = backup

        if direction is Direction.READ:
            self.read_requests += 1
            self.total_read_latency_ms += service_ms
        else:
            self.write_requests += 1
            self.total_write_latency_ms += service_ms

    def wa_factor(self) -> float:
        if self.host_writes == 0:
            raise NoDataError("write amplification is undefined before any host write")
        return self.media_writes / self.host_writes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimStats":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def dump_stats(stats: SimStats, extra: dict | None = None) -> str:
    """Machine-readable stats dump (one JSON object, sorted keys)."""
    try:
        wa = stats.wa_factor()
    except NoDataError:
        wa = None
    doc = {"format": STATS_FORMAT, "version": STATS_VERSION,
           "counters": stats.to_dict(), "wa_factor": wa}
    if extra:
        doc["device"] = extra
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_stats_dump(text: str) -> SimStats:
    doc = json.loads(text)
    if doc.get("format") != STATS_FORMAT or doc.get("version") != STATS_VERSION:
        raise ValueError("not an imrsim stats dump of a supported version")
    return SimStats.from_dict(doc["counters"])


def format_stats_table(stats: SimStats, extra: dict | None = None) -> str:
    try:
        wa = f"{stats.wa_factor():.4f}"
    except NoDataError:
        wa = "n/a"
    rows = [(k, v) for k, v in (extra or {}).items()]
    rows += [
        ("host reads (blocks)", stats.host_reads),
        ("host writes (blocks)", stats.host_writes),
        ("media reads (blocks)", stats.media_reads),
        ("media writes (blocks)", stats.media_writes),
        ("extra reads (blocks)", stats.extra_reads),
        ("extra writes (blocks)", stats.extra_writes),
        ("RMW events", stats.rmw_events),
        ("read requests", stats.read_requests),
        ("write requests", stats.write_requests),
        ("total read latency (ms)", f"{stats.total_read_latency_ms:.3f}"),
        ("total write latency (ms)", f"{stats.total_write_latency_ms:.3f}"),
        ("write amplification", wa),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


# -- checkpoints --------------------------------------------------------------

def _canonical(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def checkpoint_sequences(directory: Path) -> list[tuple[int, Path]]:
    directory = Path(directory)
    found = []
    if directory.is_dir():
        for path in directory.iterdir():
            m = _CHECKPOINT_RE.match(path.name)
            if m:
                found.append((int(m.group(1)), path))
    return sorted(found)


def checkpoint(device, directory, sequence: int | None = None) -> Path:
    """Write ``device`` to a new checkpoint file in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if sequence is None:
        existing = checkpoint_sequences(directory)
        sequence = max(device.checkpoint_sequence, existing[-1][0] if existing else 0) + 1
    body = {"sequence": sequence, "device": device.export_state()}
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "sha256": hashlib.sha256(_canonical(body)).hexdigest(), "body": body}
    path = directory / f"checkpoint-{sequence:010d}.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    device.checkpoint_sequence = sequence
    log.debug("wrote checkpoint %s", path)
    return path


def prune_checkpoints(directory, keep: int) -> None:
    """Delete all but the ``keep`` newest checkpoints."""
    for _, path in checkpoint_sequences(directory)[:-keep]:
        path.unlink()


def load_checkpoint(path):
    """Read and verify one checkpoint file; return the restored device."""
    from .placement import Device

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RestoreError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise RestoreError(f"{path}: not an imrsim checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise RestoreError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    body = doc.get("body")
    if not isinstance(body, dict) or \
            hashlib.sha256(_canonical(body)).hexdigest() != doc.get("sha256"):
        raise RestoreError(f"{path}: checksum mismatch")
    try:
        device = Device.from_state(body["device"])
    except (ImrSimError, KeyError, TypeError, ValueError) as exc:
        raise RestoreError(f"{path}: inconsistent checkpoint ({exc})") from exc
    device.checkpoint_sequence = int(body["sequence"])
    return device


def restore(path):
    """Restore from a checkpoint file, or from the newest valid one in a directory."""
    path = Path(path)
    if not path.is_dir():
        return load_checkpoint(path)
    errors = []
    for _, candidate in reversed(checkpoint_sequences(path)):
        try:
            return load_checkpoint(candidate)
        except RestoreError as exc:
            log.warning("skipping checkpoint: %s", exc)
            errors.append(str(exc))
    raise RestoreError(f"no valid checkpoint in {path}" +
                       (f" ({'; '.join(errors)})" if errors else ""))


class Checkpointer:
    """Flushes a device every ``interval`` requests and on ``close``."""

    def __init__(self, device, directory, interval: int | None = None):
        self.device = device
        self.directory = Path(directory)
        self.interval = interval or device.config.flush_interval
        self._since = 0
        device.add_observer(self._on_request)

    def _on_request(self, request, ops) -> None:
        self._since += 1
        if self._since >= self.interval:
            self.flush()

    def flush(self) -> Path:
        self._since = 0
        return checkpoint(self.device, self.directory)

    def close(self) -> Path:
        self.device.remove_observer(self._on_request)
        return self.flush()

"""Per-zone allocation frames for visualising placement dynamics.

A frame is one JSON object per line::

    {"frame": 3, "zone": 0, "format": "imrsim-viz", "version": 1,
     "request": {"seq": 41, "direction": "write", "lba": 328, "length": 8,
                 "rmw": false},
     "tracks": [{"track": 0, "kind": "bottom", "blocks": "AAAA....."}, ...]}

``blocks`` has one character per block of the track: ``.`` free,
``A`` allocated, ``R`` rewritten by an RMW restore.  States only move
forward (free -> allocated -> rewritten).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import TextIO

from .config import Mode
from .placement import Cause, OpKind

VIZ_FORMAT = "imrsim-viz"
VIZ_VERSION = 1

FREE, ALLOCATED, REWRITTEN = 0, 1, 2
_CHARS = ".AR"
_COLORS = ("#f2f2f2", "#555555", "#c0392b")


class ZoneRecorder:
    """Observer that tracks block states of one zone and emits frames.

    Attach with ``device.add_observer(recorder)``.  Every ``sample_every``-th
    request that touches the zone produces a frame.
    """

    def __init__(self, device, zone_id: int, out: TextIO | None = None,
                 sample_every: int = 1):
        if not 0 <= zone_id < device.geometry.zone_count:
            raise ValueError(f"zone {zone_id} outside [0, {device.geometry.zone_count})")
        if sample_every < 1:
            raise ValueError("sample_every must be at least 1")
        self.device = device
        self.zone_id = zone_id
        self.out = out
        self.sample_every = sample_every
        self.layout = device.layout
        self.tracks = [bytearray(self.layout.track_size(t))
                       for t in range(self.layout.tracks_per_zone)]
        self.frames_written = 0
        self._touching = 0
        self._seed_from_device()

    def _seed_from_device(self) -> None:
        device = self.device
        if device.mode is Mode.IMR:
            g = device.geometry
            for _, nbo in device.mapping.entries(self.zone_id):
                track, block = g.split_offset(nbo)
                self.tracks[track][block] = ALLOCATED
            return
        # CMR pseudo-zones are groups of uniform tracks
        per_track = self.layout.track_blocks
        first = self.zone_id * self.layout.tracks_per_zone * per_track
        for track in range(self.layout.tracks_per_zone):
            for block in range(per_track):
                lba = first + track * per_track + block
                if lba < device.capacity_blocks and device.is_mapped(lba):
                    self.tracks[track][block] = ALLOCATED

    def __call__(self, request, ops) -> None:
        touched = False
        rmw = False
        for op in ops:
            if op.zone_id != self.zone_id:
                continue
            touched = True
            if op.kind is not OpKind.MEDIA_WRITE:
                rmw = rmw or op.cause is Cause.RMW_BACKUP_READ
                continue
            row = self.tracks[op.track_offset]
            for block in range(op.block_offset, op.block_offset + op.length):
                if op.cause is Cause.RMW_RESTORE_WRITE:
                    row[block] = REWRITTEN
                elif row[block] == FREE:
                    row[block] = ALLOCATED
        if not touched:
            return
        self._touching += 1
        if self.out is not None and (self._touching - 1) % self.sample_every == 0:
            frame = self.frame(request, rmw)
            self.out.write(json.dumps(frame, separators=(",", ":")) + "\n")
            self.frames_written += 1

    def frame(self, request=None, rmw: bool = False) -> dict:
        summary = None
        if request is not None:
            summary = {"seq": self.device.request_count, "direction": request.direction.value,
                       "lba": request.lba, "length": request.length, "rmw": rmw}
        cmr = self.device.mode is Mode.CMR
        return {
            "format": VIZ_FORMAT, "version": VIZ_VERSION,
            "frame": self.frames_written, "zone": self.zone_id, "request": summary,
            "tracks": [{"track": t,
                        "kind": "cmr" if cmr else ("bottom" if t % 2 == 0 else "top"),
                        "blocks": "".join(_CHARS[s] for s in row)}
                       for t, row in enumerate(self.tracks)],
        }


def read_frames(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def render_svg(frame: dict, path, width: int = 800) -> Path:
    """Static drawing of one frame: one row per track, top tracks narrower."""
    tracks = frame["tracks"]
    longest = max(len(t["blocks"]) for t in tracks)
    scale = width / longest
    row_h = {"bottom": 14, "top": 9, "cmr": 12}
    y = 20
    parts = []
    for track in tracks:
        h = row_h[track["kind"]]
        blocks = track["blocks"]
        # run-length encode so a full zone stays a few hundred rects
        start = 0
        for i in range(1, len(blocks) + 1):
            if i == len(blocks) or blocks[i] != blocks[start]:
                color = _COLORS[_CHARS.index(blocks[start])]
                parts.append(f'<rect x="{start * scale:.2f}" y="{y}" '
                             f'width="{(i - start) * scale:.2f}" height="{h}" fill="{color}"/>')
                start = i
        parts.append(f'<text x="{width + 6}" y="{y + h - 1}" font-size="9">'
                     f'{track["track"]} {track["kind"]}</text>')
        y += h + 2
    title = f'zone {frame["zone"]}, frame {frame["frame"]}'
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 80}" height="{y + 10}">'
           f'<text x="0" y="12" font-size="11">{title}</text>' + "".join(parts) + "</svg>\n")
    path = Path(path)
    path.write_text(svg)
    return path

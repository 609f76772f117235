"""Command-line control surface.

Each invocation restores the device from the newest checkpoint in its
directory, runs one command, and writes a new checkpoint on success.  A
lock file serialises invocations on the same directory.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 state error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from . import experiment
from .config import DeviceConfig, Mode, parse_size
from .errors import (ConfigError, ImrSimError, RestoreError, TraceParseError,
                     ZoneFullError)
from .mapping import AllocationStrategy
from .placement import Device
from .stats import (Checkpointer, checkpoint_sequences, dump_stats, format_stats_table,
                    prune_checkpoints, restore)
from .trace import (TraceReader, WorkloadKind, WorkloadSpec, generate, replay_requests)
from .viz import ZoneRecorder, read_frames, render_svg

log = logging.getLogger("imrsim")

ENV_DIR = "IMRSIM_DIR"
DEFAULT_DIR = "imrsim-device"

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_STATE = 0, 2, 3, 4
KEEP_CHECKPOINTS = 3

# keys accepted by `config set`; geometry is fixed at creation
SETTABLE = {
    "allocation": "strategy", "strategy": "strategy",
    "rpm": "rpm", "seek-settle": "seek_settle", "full-stroke-seek": "full_stroke_seek",
    "flush-interval": "flush_interval",
}


class UsageError(ImrSimError):
    pass


class DeviceMissing(ImrSimError):
    pass


def device_summary(device: Device) -> dict:
    util = device.utilization()
    return {
        "mode": device.mode.value,
        "strategy": device.strategy.value if device.mode is Mode.IMR else None,
        "capacity_blocks": device.capacity_blocks,
        "zones": device.geometry.zone_count,
        "utilization": util.fraction,
        "requests": device.request_count,
        "checkpoint_sequence": device.checkpoint_sequence,
    }


class Session:
    """Lock, restore, run, checkpoint; roll back new checkpoints on failure."""

    def __init__(self, directory: Path, create_config: DeviceConfig | None = None,
                 force: bool = False, readonly: bool = False):
        self.directory = directory
        self.readonly = readonly
        self.create_config = create_config
        self.force = force
        self.lock = FileLock(str(directory / ".lock"), timeout=0)
        self.device: Device | None = None
        self._before: set[Path] = set()
        self.checkpointer: Checkpointer | None = None

    def __enter__(self) -> "Session":
        self.directory.mkdir(parents=True, exist_ok=True)
        try:
            self.lock.acquire()
        except Timeout:
            raise RestoreError(f"{self.directory} is in use by another invocation") from None
        try:
            self._open()
        except BaseException:
            self.lock.release()
            raise
        self.checkpointer = Checkpointer(self.device, self.directory)
        return self

    def _open(self) -> None:
        existing = checkpoint_sequences(self.directory)
        self._before = {p for _, p in existing}
        if self.create_config is not None:
            if existing and not self.force:
                raise UsageError(f"{self.directory} already holds a device (use --force)")
            self.device = Device(self.create_config)
            if existing:
                self.device.checkpoint_sequence = existing[-1][0]
        elif not existing:
            raise DeviceMissing(f"no device in {self.directory} (run `imrsim create` first)")
        else:
            self.device = restore(self.directory)

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                if not self.readonly:
                    self.checkpointer.close()
                    prune_checkpoints(self.directory, KEEP_CHECKPOINTS)
            else:
                for _, path in checkpoint_sequences(self.directory):
                    if path not in self._before:
                        path.unlink()
        finally:
            self.lock.release()
        return False


def _directory(args) -> Path:
    return Path(args.dir or os.environ.get(ENV_DIR) or DEFAULT_DIR)


def _config_from_args(args) -> DeviceConfig:
    values = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text()))
    flags = {
        "capacity_bytes": parse_size(args.capacity) if args.capacity else None,
        "block_size_bytes": args.block_size, "blocks_per_bottom_track": args.bottom_blocks,
        "blocks_per_top_track": args.top_blocks, "tracks_per_zone": args.zone_tracks,
        "mode": args.mode, "strategy": args.strategy, "rpm": args.rpm,
        "seek_settle": args.seek_settle, "full_stroke_seek": args.full_stroke_seek,
        "flush_interval": args.flush_interval,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    return DeviceConfig.from_dict(values)


# -- commands ---------------------------------------------------------------------

def cmd_create(args) -> int:
    config = _config_from_args(args)
    with Session(_directory(args), create_config=config, force=args.force) as s:
        print(json.dumps(device_summary(s.device), sort_keys=True))
    return EXIT_OK


def cmd_config(args) -> int:
    if args.action == "show":
        with Session(_directory(args), readonly=True) as s:
            print(json.dumps(s.device.config.to_dict(), sort_keys=True, indent=2))
        return EXIT_OK
    key = args.key.lower().replace("_", "-")
    if key not in SETTABLE:
        raise UsageError(f"unknown key {args.key!r}; settable keys: {', '.join(sorted(SETTABLE))}")
    field = SETTABLE[key]
    with Session(_directory(args)) as s:
        device = s.device
        if field == "strategy":
            try:
                strategy = AllocationStrategy.parse(args.value)
            except ValueError:
                raise UsageError(f"unknown allocation strategy {args.value!r}; "
                                 "use two-stage or three-stage") from None
            device.set_strategy(strategy)
        else:
            try:
                value = int(args.value) if field == "flush_interval" else float(args.value)
            except ValueError:
                raise UsageError(f"{args.key} needs a number, got {args.value!r}") from None
            config = device.config.replace(**{field: value})
            device.config = config
            device.model = config.model()
            s.checkpointer.interval = config.flush_interval
        print(json.dumps(device.config.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_fill(args) -> int:
    kind = WorkloadKind.SEQUENTIAL if args.sequential else WorkloadKind.FILL_RANDOM
    spec = WorkloadSpec(kind, parse_size(args.request_size), args.target, args.seed)
    with Session(_directory(args)) as s:
        count = 0
        for request in generate(spec, s.device):
            s.device.submit(request)
            count += 1
        print(json.dumps({"requests": count, **device_summary(s.device)}, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    if args.format != "msr":
        raise UsageError(f"unsupported trace format {args.format!r}")
    trace = Path(args.trace)
    if not trace.is_file():
        raise FileNotFoundError(f"trace {trace} not found")
    with Session(_directory(args)) as s:
        device = s.device
        reader = TraceReader(trace)
        count = 0
        for request in replay_requests(trace, device.geometry.block_size_bytes,
                                       device.capacity_blocks, reader):
            device.submit(request)
            count += 1
        print(json.dumps({"requests": count, "skipped_records": reader.skipped,
                          **device_summary(device)}, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    with Session(_directory(args), readonly=not args.reset) as s:
        summary = device_summary(s.device)
        if args.format == "json":
            sys.stdout.write(dump_stats(s.device.stats, summary))
        else:
            sys.stdout.write(format_stats_table(s.device.stats, summary))
        if args.reset:
            s.device.reset_stats()
    return EXIT_OK


def cmd_viz(args) -> int:
    if args.sample_every < 1:
        raise UsageError("--sample-every must be at least 1")
    with Session(_directory(args)) as s:
        device = s.device
        if not 0 <= args.zone < device.geometry.zone_count:
            raise UsageError(f"zone {args.zone} outside [0, {device.geometry.zone_count})")
        out_path = Path(args.out)
        with open(out_path, "w") as out:
            recorder = ZoneRecorder(device, args.zone, out, args.sample_every)
            device.add_observer(recorder)
            try:
                if args.trace:
                    for request in replay_requests(args.trace, device.geometry.block_size_bytes,
                                                   device.capacity_blocks):
                        device.submit(request)
                else:
                    kind = (WorkloadKind.SEQUENTIAL if args.workload == "sequential"
                            else WorkloadKind.FILL_RANDOM)
                    spec = WorkloadSpec(kind, parse_size(args.request_size), args.target,
                                        args.seed)
                    for request in generate(spec, device):
                        device.submit(request)
            finally:
                device.remove_observer(recorder)
        if args.svg:
            render_svg(recorder.frame(), args.svg)
        print(json.dumps({"frames": recorder.frames_written, "out": str(out_path)}))
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        frames = read_frames(args.frames)
    except ValueError as exc:
        raise UsageError(f"{args.frames} is not a frames file ({exc})") from None
    if not frames:
        raise UsageError(f"{args.frames} holds no frames")
    index = args.frame if args.frame is not None else len(frames) - 1
    if not -len(frames) <= index < len(frames):
        raise UsageError(f"frame {index} outside [0, {len(frames)})")
    render_svg(frames[index], args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    base = DeviceConfig(capacity_bytes=parse_size(args.capacity))
    rows = []
    if args.name == "wa-usage":
        for seed in args.seeds:
            for result in experiment.wa_vs_usage(base, args.usages, seed, args.requests,
                                                 args.write_ratio):
                rows.append(result.row())
    else:
        for seed in args.seeds:
            results = experiment.workload_comparison(base, args.utilization, seed,
                                                     args.requests, args.write_ratio)
            rows.extend(r.row() for r in results.values())
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imrsim",
        description="Interlaced magnetic recording disk simulator.",
        epilog="example: imrsim --dir dev create --capacity 1GiB && "
               "imrsim --dir dev fill --target 0.8 && imrsim --dir dev stats")
    parser.add_argument("--dir", help=f"device directory (default ${ENV_DIR} or ./{DEFAULT_DIR})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("create", help="create an empty device")
    p.add_argument("--config", help="JSON file with DeviceConfig fields")
    p.add_argument("--capacity", help="e.g. 128GiB (default), 1GiB")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--strategy", choices=[s.value for s in AllocationStrategy])
    p.add_argument("--zone-tracks", type=int, help="tracks per zone (even)")
    p.add_argument("--bottom-blocks", type=int, help="blocks per bottom track")
    p.add_argument("--top-blocks", type=int, help="blocks per top track")
    p.add_argument("--block-size", type=int)
    p.add_argument("--rpm", type=float)
    p.add_argument("--seek-settle", type=float, help="ms")
    p.add_argument("--full-stroke-seek", type=float, help="ms")
    p.add_argument("--flush-interval", type=int, help="checkpoint every N requests")
    p.add_argument("--force", action="store_true", help="replace an existing device")
    p.set_defaults(func=cmd_create)

    p = sub.add_parser("config", help="show or change device settings")
    p.add_argument("action", choices=["show", "set"])
    p.add_argument("key", nargs="?")
    p.add_argument("value", nargs="?")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("fill", help="precondition with random (or sequential) writes")
    p.add_argument("--target", type=float, required=True, help="utilization in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--request-size", default="32KiB")
    p.add_argument("--sequential", action="store_true")
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("replay", help="replay a block trace")
    p.add_argument("trace")
    p.add_argument("--format", default="msr")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("stats", help="print counters and write amplification")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("--reset", action="store_true", help="zero the counters afterwards")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("viz", help="record allocation frames of one zone")
    p.add_argument("--zone", type=int, required=True)
    p.add_argument("--out", required=True, help="frames file (JSON lines)")
    p.add_argument("--sample-every", type=int, default=1)
    p.add_argument("--svg", help="also draw the final state")
    p.add_argument("--workload", choices=["fill", "sequential"], default="sequential")
    p.add_argument("--target", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--request-size", default="32KiB")
    p.add_argument("--trace", help="drive the device from a trace instead")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("render", help="draw one recorded frame as SVG")
    p.add_argument("frames")
    p.add_argument("out")
    p.add_argument("--frame", type=int)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("experiment", help="run a canned experiment (no device dir needed)")
    p.add_argument("name", choices=["wa-usage", "latency"])
    p.add_argument("--capacity", default="1GiB")
    p.add_argument("--usages", type=float, nargs="+", default=list(experiment.DEFAULT_USAGES))
    p.add_argument("--utilization", type=float, default=0.80, help="latency experiment only")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--requests", type=int, default=5000)
    p.add_argument("--write-ratio", type=float, default=experiment.SRC1_2_WRITE_RATIO)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config" and args.action == "set" and (args.key is None or args.value is None):
        parser.error("config set needs KEY and VALUE")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"imrsim: usage error: {exc}", file=sys.stderr)
        print("run `imrsim --help` or `imrsim COMMAND --help` for usage", file=sys.stderr)
        return EXIT_USAGE
    except (DeviceMissing, OSError, TraceParseError) as exc:
        print(f"imrsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ZoneFullError, RestoreError, ImrSimError) as exc:
        print(f"imrsim: state error: {exc}", file=sys.stderr)
        return EXIT_STATE


if __name__ == "__main__":
    sys.exit(main())

"""Canned experiments: WA versus space usage and per-mode latency totals.

Every run preconditions a fresh device with random 32 KB first-writes up to
the requested utilization, clears the counters, then drives a random
read/update workload over the written slots.  The same seed gives every
device the same logical request stream.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .config import DeviceConfig, GiB, Mode
from .errors import NoDataError
from .mapping import AllocationStrategy
from .placement import Device
from .stats import SimStats
from .trace import WorkloadKind, WorkloadSpec, generate_fill, generate_random_update

DEFAULT_USAGES = (0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90)
# write share of the src1_2 MSR trace
SRC1_2_WRITE_RATIO = 0.7463


def precondition(device: Device, utilization: float, seed: int = 0,
                 request_size_bytes: int = 32768) -> int:
    spec = WorkloadSpec(WorkloadKind.FILL_RANDOM, request_size_bytes, utilization, seed)
    count = 0
    for request in generate_fill(spec, device):
        device.submit(request)
        count += 1
    return count


def run_updates(device: Device, requests: int, seed: int = 0,
                write_ratio: float = SRC1_2_WRITE_RATIO,
                request_size_bytes: int = 32768) -> SimStats:
    spec = WorkloadSpec(WorkloadKind.RANDOM_UPDATE, request_size_bytes, seed=seed,
                        request_count=requests, write_ratio=write_ratio)
    for request in generate_random_update(spec, device):
        device.submit(request)
    return device.stats


@dataclass
class RunResult:
    label: str
    utilization: float
    seed: int
    stats: SimStats

    @property
    def wa(self) -> float | None:
        try:
            return self.stats.wa_factor()
        except NoDataError:
            return None

    def row(self) -> dict:
        return {"device": self.label, "utilization": self.utilization, "seed": self.seed,
                "wa": self.wa, **self.stats.to_dict()}


def single_run(config: DeviceConfig, utilization: float, seed: int, requests: int,
               write_ratio: float = SRC1_2_WRITE_RATIO, label: str | None = None) -> RunResult:
    device = Device(config)
    # fill and workload draw from separate streams of the same seed
    precondition(device, utilization, seed=seed)
    device.reset_stats()
    run_updates(device, requests, seed=seed + 1_000_003, write_ratio=write_ratio)
    if label is None:
        label = "cmr" if config.mode is Mode.CMR else config.strategy.value
    return RunResult(label, utilization, seed, device.stats)


def device_variants(base: DeviceConfig) -> dict[str, DeviceConfig]:
    return {
        "cmr": base.replace(mode=Mode.CMR),
        "two-stage": base.replace(mode=Mode.IMR, strategy=AllocationStrategy.TWO_STAGE),
        "three-stage": base.replace(mode=Mode.IMR, strategy=AllocationStrategy.THREE_STAGE),
    }


def wa_vs_usage(base: DeviceConfig | None = None, usages=DEFAULT_USAGES, seed: int = 0,
                requests: int = 5000, write_ratio: float = SRC1_2_WRITE_RATIO,
                variants=("cmr", "two-stage", "three-stage")) -> list[RunResult]:
    """WA of the update workload at each usage, for each device variant.

    The fill permutation depends only on the seed, so topping a device up
    from one usage to the next yields the same state as a fresh fill; each
    variant is filled once and copied at every usage point.
    """
    base = base or DeviceConfig(capacity_bytes=1 * GiB)
    configs = device_variants(base)
    results = []
    for label in variants:
        device = Device(configs[label])
        for usage in sorted(usages):
            precondition(device, usage, seed=seed)
            probe = copy.deepcopy(device)
            probe.reset_stats()
            run_updates(probe, requests, seed=seed + 1_000_003, write_ratio=write_ratio)
            results.append(RunResult(label, usage, seed, probe.stats))
    return results


def workload_comparison(base: DeviceConfig | None = None, utilization: float = 0.80,
                        seed: int = 0, requests: int = 5000,
                        write_ratio: float = SRC1_2_WRITE_RATIO) -> dict[str, RunResult]:
    base = base or DeviceConfig(capacity_bytes=1 * GiB)
    return {label: single_run(config, utilization, seed, requests, write_ratio, label)
            for label, config in device_variants(base).items()}

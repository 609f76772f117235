import pytest

from imrsim.config import DeviceConfig, GiB, Mode
from imrsim.geometry import DiskGeometry
from imrsim.placement import Device


def enumerate_zone(geometry: DiskGeometry):
    """Oracle: (track, block) for every in-zone offset, by walking tracks."""
    cells = []
    for track in range(geometry.tracks_per_zone):
        size = (geometry.blocks_per_bottom_track if track % 2 == 0
                else geometry.blocks_per_top_track)
        cells.extend((track, b) for b in range(size))
    return cells


@pytest.fixture
def small_config():
    # 2 zones of 4 tracks: 2 * (568 + 456 + 568 + 456) = 4096 blocks
    return DeviceConfig(capacity_bytes=4096 * 4096, tracks_per_zone=4)


@pytest.fixture
def small_device(small_config):
    return Device(small_config)


@pytest.fixture
def small_cmr(small_config):
    return Device(small_config.replace(mode=Mode.CMR))


@pytest.fixture
def gib_config():
    return DeviceConfig(capacity_bytes=1 * GiB)


# acceptance verdicts, printed as one line per criterion at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

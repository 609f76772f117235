import copy

import pytest
from hypothesis import given, settings, strategies as st

from imrsim.config import DeviceConfig, Mode
from imrsim.errors import AddressError, LogicError
from imrsim.geometry import BlockTriple
from imrsim.placement import (DAMAGED, Cause, Device, IoRequest, OpKind, media_read,
                              media_write)

R, W = IoRequest.read, IoRequest.write
BACKUP, RESTORE = Cause.RMW_BACKUP_READ, Cause.RMW_RESTORE_WRITE


def payload(tag: int) -> bytes:
    return f"block-{tag}".encode()


def fill_zone(device, zone=0, count=None):
    cap = device.geometry.zone_capacity
    count = cap if count is None else count
    for bo in range(count):
        device.handle_request(W(zone * cap + bo), [payload(zone * cap + bo)])


def test_first_write_is_plain(small_device):
    assert small_device.handle_request(W(0)) == [media_write(0, 0, 0)]


def test_read_unwritten_returns_zeros(small_device):
    done = small_device.submit(R(0))
    assert done.ops == [media_read(0, 0, 0)]
    assert done.data == [bytes(4096)]
    assert not small_device.is_mapped(0)


def test_five_op_rmw_example(small_device):
    fill_zone(small_device)
    # two-stage on 4 tracks: bo 568..1135 sit on track 2
    lba = 568 + 100
    assert small_device.physical_address(lba) == (0, 2, 100)
    ops = small_device.handle_request(W(lba), [b"new"])
    assert ops == [
        media_read(0, 1, 80, cause=BACKUP),
        media_read(0, 3, 80, cause=BACKUP),
        media_write(0, 2, 100),
        media_write(0, 1, 80, cause=RESTORE),
        media_write(0, 3, 80, cause=RESTORE),
    ]


def test_rmw_preserves_top_data(small_device):
    fill_zone(small_device)
    small_device.handle_request(W(668), [b"new"])
    assert small_device.submit(R(668)).data[0].rstrip(b"\0") == b"new"
    for lba in range(small_device.geometry.zone_capacity):
        if lba != 668:
            assert small_device.submit(R(lba)).data[0].rstrip(b"\0") == payload(lba)


def test_missing_restore_would_be_detected(small_device):
    # a bottom write without RMW garbles its top neighbours
    fill_zone(small_device)
    small_device._execute([media_write(0, 2, 100)], {1024 + 100: b"x"})
    top = small_device.geometry.track_start(1) + 80
    assert small_device.store.raw(top) == DAMAGED


def test_edge_track_has_one_neighbour(small_device):
    fill_zone(small_device)
    ops = small_device.handle_request(W(5))
    assert [op.cause for op in ops] == [BACKUP, Cause.HOST, RESTORE]
    assert ops[0].track_offset == 1


def test_one_valid_neighbour():
    config = DeviceConfig(capacity_bytes=10240 * 4096)
    device = Device(config)
    g = device.geometry
    device.mapping.bind(0, 0, g.join_offset(2, 100))
    device.mapping.bind(0, 1, g.join_offset(3, 80))
    ops = device.handle_request(W(0))
    assert ops == [media_read(0, 3, 80, cause=BACKUP), media_write(0, 2, 100),
                   media_write(0, 3, 80, cause=RESTORE)]


def test_rmw_update_preconditions(small_device):
    small_device.handle_request(W(0))
    with pytest.raises(LogicError):
        small_device.rmw_update(BlockTriple(0, 0, 0))
    with pytest.raises(LogicError):
        small_device.rmw_update(BlockTriple(0, 1, 0))


def test_top_track_update_is_free(small_device):
    fill_zone(small_device)
    lba = 1136 + 10       # first top track in two-stage order
    assert small_device.physical_address(lba).track_offset == 1
    assert small_device.handle_request(W(lba)) == [media_write(0, 1, 10)]


def test_run_coalescing_and_shared_backups(small_device):
    fill_zone(small_device)
    # blocks 0..7 of track 0 overlap top blocks 0..5 (7*456//568 = 5)
    ops = small_device.handle_request(W(0, 8))
    assert ops == [media_read(0, 1, 0, 6, BACKUP), media_write(0, 0, 0, 8),
                   media_write(0, 1, 0, 6, RESTORE)]


def test_no_rmw_below_stage_boundary(small_device):
    g = small_device.geometry
    for zone in range(g.zone_count):
        for bo in range(g.bottom_blocks_per_zone):
            ops = small_device.handle_request(W(zone * g.zone_capacity + bo))
            assert all(op.cause is Cause.HOST for op in ops)
    assert small_device.utilization().fraction == pytest.approx(568 / 1024)


def test_request_crossing_device_end_has_no_side_effects(small_device):
    small_device.handle_request(W(10))
    before = copy.deepcopy(small_device.export_state())
    with pytest.raises(AddressError):
        small_device.submit(W(small_device.capacity_blocks - 2, 4))
    with pytest.raises(AddressError):
        small_device.submit(R(-1))
    assert small_device.export_state() == before


def test_request_spanning_zones(small_device):
    ops = small_device.handle_request(W(2046, 4))
    assert [op.zone_id for op in ops] == [0, 1]
    assert small_device.is_mapped(2049)


def test_cmr_identity_and_no_rmw(small_cmr):
    assert small_cmr.handle_request(W(0, 8)) == [media_write(0, 0, 0, 8)]
    for _ in range(3):
        for lba in range(0, 2000, 7):
            for op in small_cmr.handle_request(W(lba, 3)):
                assert op.cause is Cause.HOST
    assert small_cmr.stats.host_writes == 0     # handle_request does not account
    small_cmr.submit(W(5, 4))
    assert small_cmr.stats.wa_factor() == 1.0
    assert small_cmr.submit(R(4000)).data == [bytes(4096)]
    with pytest.raises(LogicError):
        Device(small_cmr.config.replace(mode=Mode.IMR)).mode_cmr(W(0))


def test_determinism(small_config):
    import random

    rng = random.Random(7)
    reqs = [(rng.random() < 0.7, rng.randrange(0, 4000), rng.randrange(1, 9)) for _ in range(600)]
    runs = []
    for _ in range(2):
        device = Device(small_config)
        ops = []
        for is_write, lba, n in reqs:
            req = W(lba, n) if is_write else R(lba, n)
            ops.extend(device.submit(req).ops)
        runs.append((ops, device.stats.to_dict()))
    assert runs[0] == runs[1]


@st.composite
def op_sequences(draw):
    n = draw(st.integers(1, 120))
    return [(draw(st.booleans()), draw(st.integers(0, 4095)), draw(st.integers(1, 12)),
             draw(st.integers(0, 1 << 20))) for _ in range(n)]


def check_against_shadow(device, sequence, prefill=0):
    shadow: dict[int, bytes] = {}
    zero = bytes(device.geometry.block_size_bytes)
    cap = device.capacity_blocks
    # sequential first-writes push the zone past its bottom tracks
    for lba in range(0, prefill, 16):
        n = min(16, prefill - lba)
        data = [f"pre:{lba + k}".encode() for k in range(n)]
        device.submit(W(lba, n), data)
        shadow.update({lba + k: d.ljust(len(zero), b"\0") for k, d in enumerate(data)})
    for is_write, lba, n, tag in sequence:
        n = min(n, cap - lba)
        if is_write:
            data = [f"{tag}:{lba + k}".encode() for k in range(n)]
            device.submit(W(lba, n), data)
            shadow.update({lba + k: d.ljust(len(zero), b"\0") for k, d in enumerate(data)})
        else:
            got = device.submit(R(lba, n)).data
            assert got == [shadow.get(lba + k, zero) for k in range(n)]
    return shadow


@settings(max_examples=60, deadline=None)
@given(op_sequences(), st.sampled_from(["two-stage", "three-stage", "cmr"]),
       st.integers(0, 2048))
def test_data_integrity_property(sequence, variant, prefill):
    config = DeviceConfig(capacity_bytes=4096 * 4096, tracks_per_zone=4)
    config = config.replace(mode=Mode.CMR) if variant == "cmr" else config.replace(strategy=variant)
    device = Device(config)
    shadow = check_against_shadow(device, sequence, prefill)
    for lba, expected in shadow.items():
        assert device.submit(R(lba)).data[0] == expected


@settings(max_examples=60, deadline=None)
@given(op_sequences(), st.integers(0, 2048))
def test_extra_ops_per_block_bound(sequence, prefill):
    device = Device(DeviceConfig(capacity_bytes=4096 * 4096, tracks_per_zone=4))
    if prefill:
        device.handle_request(W(0, prefill))
    for is_write, lba, n, _ in sequence:
        n = min(n, device.capacity_blocks - lba)
        if not is_write:
            continue
        ops = device.handle_request(W(lba, n))
        extra_r = sum(op.length for op in ops if op.cause is BACKUP)
        extra_w = sum(op.length for op in ops if op.cause is RESTORE)
        assert extra_r <= 2 * n and extra_w <= 2 * n
        assert extra_r == extra_w
        assert sum(op.length for op in ops if op.cause is Cause.HOST) == n
        assert all(op.kind is OpKind.MEDIA_WRITE for op in ops if op.cause is RESTORE)


def test_checkpoint_state_roundtrip(small_device):
    fill_zone(small_device, 0, 1500)
    clone = Device.from_state(small_device.export_state())
    assert clone.export_state() == small_device.export_state()
    assert clone.handle_request(W(600)) == small_device.handle_request(W(600))

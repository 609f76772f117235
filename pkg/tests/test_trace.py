import gzip
import logging

import pytest
from hypothesis import given, strategies as st

from imrsim.config import DeviceConfig
from imrsim.errors import ConfigError, TraceParseError, UnknownOpTypeError
from imrsim.placement import Cause, Device, Direction
from imrsim.trace import (TraceReader, TraceRecord, WorkloadKind, WorkloadSpec, format_msr,
                          generate, generate_fill, generate_random_update,
                          generate_sequential, parse_msr, replay_requests, to_requests)

HM = "128166372003061629,hm,0,Write,107520,24576,41116"


def covered_blocks(offset, size, block, capacity):
    """Oracle: every block touched by a byte of the range, wrapped without dedup."""
    first, last = offset // block, (offset + size - 1) // block
    return sorted(k % capacity for k in range(first, last + 1))


def request_blocks(requests):
    return sorted(b for r in requests for b in range(r.lba, r.lba + r.length))


def test_parse_hm_line():
    r = parse_msr(HM)
    assert r.op_type is Direction.WRITE
    assert (r.offset_bytes, r.size_bytes, r.response_time) == (107520, 24576, 41116)
    assert (r.host, r.disk_number, r.timestamp) == ("hm", 0, 128166372003061629)


def test_parse_read_case_insensitive():
    r = parse_msr("1,src1,2,read,0,4096")
    assert r.op_type is Direction.READ and r.size_bytes == 4096 and r.response_time is None


@pytest.mark.parametrize("line", ["not,a,trace", "1,h,0,Write,x,4096,1", "1,h,0,Write,0,0,1",
                                  "1,h,0,Write,-4096,4096,1"])
def test_malformed_lines(line):
    with pytest.raises(TraceParseError):
        parse_msr(line, 12)


def test_error_carries_line_number():
    with pytest.raises(TraceParseError, match="line 7"):
        parse_msr("not,a,trace", 7)


def test_unknown_op_type():
    with pytest.raises(UnknownOpTypeError):
        parse_msr("1,h,0,Trim,0,4096,1")


@given(st.integers(0, 2**62), st.text("abcxyz", min_size=1, max_size=5), st.integers(0, 9),
       st.sampled_from(list(Direction)), st.integers(0, 2**40), st.integers(1, 2**24),
       st.none() | st.integers(0, 10**6))
def test_format_roundtrip(ts, host, disk, op, offset, size, resp):
    record = TraceRecord(ts, host, disk, op, offset, size, resp)
    assert parse_msr(format_msr(record)) == record


def test_to_requests_examples():
    reqs = to_requests(parse_msr(HM), 4096, 256000)
    assert [(r.lba, r.length) for r in reqs] == [(26, 7)]
    assert request_blocks(reqs) == covered_blocks(107520, 24576, 4096, 256000)
    reqs = to_requests(parse_msr("0,h,0,Read,0,4096"), 4096, 256000)
    assert [(r.lba, r.length) for r in reqs] == [(0, 1)]
    one_past = 256000 * 4096
    reqs = to_requests(parse_msr(f"0,h,0,Write,{one_past},4096"), 4096, 256000)
    assert [(r.lba, r.length) for r in reqs] == [(0, 1)]


def test_to_requests_splits_at_device_end():
    reqs = to_requests(parse_msr(f"0,h,0,Write,{98 * 4096 + 100},{4 * 4096}"), 4096, 100)
    assert [(r.lba, r.length) for r in reqs] == [(98, 2), (0, 3)]


@given(st.integers(0, 10**9), st.integers(1, 300_000), st.integers(50, 5000))
def test_to_requests_matches_byte_oracle(offset, size, capacity):
    reqs = to_requests(TraceRecord(0, "h", 0, Direction.WRITE, offset, size), 4096, capacity)
    assert request_blocks(reqs) == covered_blocks(offset, size, 4096, capacity)
    assert all(0 <= r.lba and r.lba + r.length <= capacity for r in reqs)


def test_reader_plain_gz_and_skips(tmp_path, caplog):
    lines = ["# comment", HM, "", "2,hm,0,Flush,0,4096,1", "3,hm,0,Read,4096,8192,1"]
    plain = tmp_path / "t.csv"
    plain.write_text("\n".join(lines) + "\n")
    packed = tmp_path / "t.csv.gz"
    with gzip.open(packed, "wt") as fh:
        fh.write("\n".join(lines) + "\n")
    for path in (plain, packed):
        reader = TraceReader(path)
        with caplog.at_level(logging.WARNING):
            records = list(reader)
        assert [r.op_type for r in records] == [Direction.WRITE, Direction.READ]
        assert reader.skipped == 1
    reqs = list(replay_requests(plain, 4096, 256000))
    assert [(r.lba, r.length) for r in reqs] == [(26, 7), (1, 2)]


def test_reader_reports_bad_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(HM + "\nnot,a,trace\n")
    with pytest.raises(TraceParseError, match="line 2"):
        list(TraceReader(path))


def test_spec_validation():
    with pytest.raises(ConfigError):
        WorkloadSpec(target_utilization=1.2)
    with pytest.raises(ConfigError):
        WorkloadSpec(WorkloadKind.RANDOM_UPDATE, write_ratio=-0.1)


def test_fill_target_zero_is_empty(small_device):
    assert list(generate_fill(WorkloadSpec(target_utilization=0.0), small_device)) == []


def test_fill_is_deterministic(small_config):
    spec = WorkloadSpec(target_utilization=0.8, seed=11)
    a = list(generate_fill(spec, Device(small_config)))
    b = list(generate_fill(spec, Device(small_config)))
    assert a == b
    assert all(r.length == 8 and r.lba % 8 == 0 for r in a)
    starts = [r.lba for r in a]
    assert len(set(starts)) == len(starts)
    other = list(generate_fill(WorkloadSpec(target_utilization=0.8, seed=12), Device(small_config)))
    assert other != a


def test_fill_hits_target_without_rmw(gib_config):
    device = Device(gib_config)
    spec = WorkloadSpec(target_utilization=0.5546, seed=3)
    for request in generate_fill(spec, device):
        ops = device.submit(request).ops
        assert all(op.cause is Cause.HOST for op in ops)
    u = device.utilization()
    assert u.mapped_blocks >= 0.5546 * device.capacity_blocks
    assert u.mapped_blocks < 0.5546 * device.capacity_blocks + 8
    assert device.stats.rmw_events == 0 and device.stats.wa_factor() == 1.0


def test_fill_top_up_matches_fresh_fill(small_config):
    stepped = Device(small_config)
    for target in (0.3, 0.6, 0.9):
        for r in generate_fill(WorkloadSpec(target_utilization=target, seed=5), stepped):
            stepped.submit(r)
    fresh = Device(small_config)
    for r in generate_fill(WorkloadSpec(target_utilization=0.9, seed=5), fresh):
        fresh.submit(r)
    assert stepped.mapping.export_state()["zones"].keys() == fresh.mapping.export_state()["zones"].keys()
    assert ({lba for lba in range(fresh.capacity_blocks) if fresh.is_mapped(lba)}
            == {lba for lba in range(stepped.capacity_blocks) if stepped.is_mapped(lba)})


def test_sequential_generator(small_device):
    spec = WorkloadSpec(WorkloadKind.SEQUENTIAL, target_utilization=0.25)
    reqs = list(generate_sequential(spec, small_device))
    assert [r.lba for r in reqs[:3]] == [0, 8, 16]
    assert sum(r.length for r in reqs) == 1024


def test_random_update_targets_written_slots(small_device):
    for r in generate_fill(WorkloadSpec(target_utilization=0.5, seed=1), small_device):
        small_device.submit(r)
    spec = WorkloadSpec(WorkloadKind.RANDOM_UPDATE, seed=2, request_count=500, write_ratio=0.75)
    reqs = list(generate(spec, small_device))
    assert len(reqs) == 500
    assert all(small_device.is_mapped(r.lba) for r in reqs)
    writes = sum(r.direction is Direction.WRITE for r in reqs)
    assert 0.68 < writes / 500 < 0.82
    assert reqs == list(generate_random_update(spec, small_device))


def test_random_update_on_empty_device(small_device):
    spec = WorkloadSpec(WorkloadKind.RANDOM_UPDATE, request_count=10)
    assert list(generate(spec, small_device)) == []


def test_request_size_must_be_block_multiple(small_device):
    with pytest.raises(ConfigError):
        list(generate_fill(WorkloadSpec(request_size_bytes=5000, target_utilization=0.1),
                           small_device))


def test_replay_kind_needs_a_file(small_device):
    with pytest.raises(ConfigError):
        generate(WorkloadSpec(WorkloadKind.REPLAY), small_device)


def test_fill_utilization_with_cmr(small_config):
    device = Device(DeviceConfig.from_dict({**small_config.to_dict(), "mode": "cmr"}))
    for r in generate_fill(WorkloadSpec(target_utilization=0.5, seed=0), device):
        device.submit(r)
    assert device.utilization().fraction == pytest.approx(0.5, abs=8 / device.capacity_blocks)

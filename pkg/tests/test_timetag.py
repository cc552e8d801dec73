"""Stream format tests: binary/CSV round-trips, validation errors, merging."""

from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2kit import (
    FormatError,
    OrderingError,
    SchemaError,
    StreamHeader,
    TimeTagRecord,
    TimeTagStream,
    merge_streams,
    parse_stream,
    read_stream_file,
    write_stream,
    write_stream_file,
)
from g2kit.timetag import HEADER_SIZE, RECORD_SIZE, UNKNOWN_RECORD_COUNT


def _stream(pairs) -> TimeTagStream:
    return TimeTagStream(
        np.array([c for c, _ in pairs], dtype=np.uint8),
        np.array([t for _, t in pairs], dtype=np.uint64),
    )


def _header(n: int | None, resolution_ps: int = 1, channel_count: int = 3) -> StreamHeader:
    return StreamHeader(
        resolution_ps=resolution_ps, channel_count=channel_count, record_count=n
    )


# sorted uint64 timestamps paired with channels in {0, 1, 2}
_record_lists = st.lists(
    st.tuples(st.integers(0, 2), st.integers(0, 2**63)), max_size=200
).map(lambda pairs: sorted(pairs, key=lambda p: p[1]))


@given(_record_lists, st.sampled_from(["binary", "csv"]))
@settings(max_examples=200, deadline=None)
def test_round_trip_preserves_records(pairs, fmt):
    stream = _stream(pairs)
    payload = write_stream(_header(len(pairs)), stream, format=fmt)
    header, parsed = parse_stream(payload, format=fmt)
    assert parsed == stream
    assert header.record_count == len(pairs)
    # a second encode of the parse is byte-identical
    assert write_stream(header, parsed, format=fmt) == payload


def test_binary_layout_is_stable():
    stream = _stream([(0, 0), (1, 12_000), (2, 2**40)])
    payload = write_stream(_header(3), stream, format="binary")
    assert payload[:4] == b"TTAG"
    assert len(payload) == HEADER_SIZE + 3 * RECORD_SIZE
    version, resolution, channels, count = struct.unpack_from("<HIHQ", payload, 4)
    assert (version, resolution, channels, count) == (1, 1, 3, 3)
    assert payload[HEADER_SIZE] == 0  # first record channel
    assert struct.unpack_from("<Q", payload, HEADER_SIZE + 1)[0] == 0


def test_empty_stream_round_trips():
    for fmt in ("binary", "csv"):
        payload = write_stream(_header(0), _stream([]), format=fmt)
        header, parsed = parse_stream(payload, format=fmt)
        assert len(parsed) == 0
        assert header.record_count == 0


def test_unknown_record_count_sentinel_round_trips():
    stream = _stream([(0, 5), (1, 9)])
    payload = write_stream(_header(None), stream, format="binary")
    assert struct.unpack_from("<Q", payload, 12)[0] == UNKNOWN_RECORD_COUNT
    header, parsed = parse_stream(payload, format="binary")
    assert header.record_count is None
    assert parsed == stream


def test_binary_bad_magic_names_offset_zero():
    payload = b"XXXX" + bytes(16)
    with pytest.raises(FormatError) as err:
        parse_stream(payload, format="binary")
    assert err.value.byte_offset == 0


def test_binary_bad_version_names_offset():
    payload = bytearray(write_stream(_header(0), _stream([]), format="binary"))
    payload[4:6] = struct.pack("<H", 9)
    with pytest.raises(FormatError) as err:
        parse_stream(bytes(payload), format="binary")
    assert err.value.byte_offset == 4


def test_binary_truncated_header():
    with pytest.raises(FormatError) as err:
        parse_stream(b"TTAG\x01\x00", format="binary")
    assert err.value.byte_offset == 6


def test_binary_partial_record_names_offset():
    good = write_stream(_header(None), _stream([(0, 1), (1, 2)]), format="binary")
    with pytest.raises(FormatError) as err:
        parse_stream(good + b"\x01\x02\x03", format="binary")
    assert err.value.byte_offset == HEADER_SIZE + 2 * RECORD_SIZE


def test_binary_record_count_mismatch():
    payload = bytearray(write_stream(_header(2), _stream([(0, 1), (1, 2)]), format="binary"))
    payload[12:20] = struct.pack("<Q", 7)
    with pytest.raises(FormatError) as err:
        parse_stream(bytes(payload), format="binary")
    assert "7" in str(err.value)


def test_non_monotonic_timestamps_name_record_index():
    payload = write_stream(
        _header(None), _stream([(0, 10), (1, 20)]), format="binary"
    ) + struct.pack("<BQ", 1, 5)
    with pytest.raises(OrderingError) as err:
        parse_stream(payload, format="binary")
    assert err.value.record_index == 2


def test_unknown_channel_rejected():
    stream = _stream([(0, 1), (7, 2)])
    payload = write_stream(
        StreamHeader(resolution_ps=1, channel_count=8, record_count=2), stream
    )
    # reparse under the 3-channel schema used throughout
    broken = payload[:6] + struct.pack("<IH", 1, 3) + payload[12:]
    with pytest.raises(SchemaError) as err:
        parse_stream(broken, format="binary")
    assert "channel 7" in str(err.value)
    assert "index 1" in str(err.value)


def test_resolution_multiple_enforced_both_ways():
    stream = _stream([(0, 500)])
    header = _header(1, resolution_ps=200)
    with pytest.raises(SchemaError):
        write_stream(header, stream, format="binary")
    ok = write_stream(_header(1, resolution_ps=250), stream, format="binary")
    parsed_header, _ = parse_stream(ok, format="binary")
    assert parsed_header.resolution_ps == 250


def test_csv_header_line_required():
    with pytest.raises(FormatError) as err:
        parse_stream("channel;timestamp\n0,1\n", format="csv")
    assert err.value.line_number == 1


def test_csv_bad_field_names_line():
    text = "channel,timestamp_ps\n0,100\n1,abc\n"
    with pytest.raises(FormatError) as err:
        parse_stream(text, format="csv")
    assert err.value.line_number == 3


def test_csv_wrong_column_count_names_line():
    text = "channel,timestamp_ps\n0,1,2\n"
    with pytest.raises(FormatError) as err:
        parse_stream(text, format="csv")
    assert err.value.line_number == 2


def test_write_validates_before_emitting():
    with pytest.raises(SchemaError):
        write_stream(_header(1), _stream([(0, 1), (1, 2)]), format="binary")
    with pytest.raises(OrderingError):
        write_stream(_header(None), [TimeTagRecord(0, 5), TimeTagRecord(0, 1)])


def test_record_validation():
    with pytest.raises(SchemaError):
        TimeTagRecord(channel=-1, timestamp_ps=0)
    with pytest.raises(SchemaError):
        TimeTagRecord(channel=0, timestamp_ps=2**64)
    with pytest.raises(SchemaError):
        StreamHeader(resolution_ps=0, channel_count=3, record_count=0)


def test_file_round_trip_suffix_inference(tmp_path):
    stream = _stream([(0, 1000), (2, 3000)])
    bin_path = tmp_path / "det.ttag"
    csv_path = tmp_path / "det.csv"
    write_stream_file(bin_path, _header(2), stream)
    write_stream_file(csv_path, _header(2), stream)
    _, from_bin = read_stream_file(bin_path)
    _, from_csv = read_stream_file(csv_path)
    assert from_bin == stream
    assert from_csv == stream
    assert bin_path.read_bytes()[:4] == b"TTAG"
    assert csv_path.read_bytes().startswith(b"channel,timestamp_ps")


@given(st.lists(_record_lists, max_size=4))
@settings(max_examples=100, deadline=None)
def test_merge_is_ordered_and_complete(stream_lists):
    streams = [_stream(pairs) for pairs in stream_lists]
    merged = merge_streams(streams)
    assert len(merged) == sum(len(s) for s in streams)
    ts = merged.timestamps_ps.astype(np.int64)
    assert np.all(np.diff(ts) >= 0)
    # per-channel multiset of timestamps is preserved
    for ch in (0, 1, 2):
        expected = np.sort(np.concatenate([s.channel_events(ch) for s in streams])) \
            if streams else np.empty(0, np.int64)
        np.testing.assert_array_equal(np.sort(merged.channel_events(ch)), expected)


def test_merge_tie_break_timestamp_then_channel_then_stream():
    first = _stream([(2, 100), (1, 200)])
    second = _stream([(1, 100), (1, 200)])
    merged = merge_streams([first, second])
    got = [(int(c), int(t)) for c, t in zip(merged.channels, merged.timestamps_ps)]
    # at t=100 channel 1 (stream 2) precedes channel 2 (stream 1); at t=200 the
    # equal-channel tie keeps stream order
    assert got == [(1, 100), (2, 100), (1, 200), (1, 200)]


def test_merge_of_nothing_is_empty():
    assert len(merge_streams([])) == 0

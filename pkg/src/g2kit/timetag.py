"""Time-tagged detection event streams: binary/CSV parsing, writing, merging.

A stream is an ordered sequence of (channel, timestamp) records on an integer
picosecond lattice.  Channel 0 carries valid-gate triggers; channels 1 and 2
carry the two detectors behind the 50:50 splitter.

Binary layout (``TTAG`` version 1, little-endian, no padding)::

    offset  size  field
    0       4     magic  0x54 0x54 0x41 0x47  ("TTAG")
    4       2     u16    format version (1)
    6       4     u32    resolution_ps
    10      2     u16    channel_count
    12      8     u64    record_count (0xFFFFFFFFFFFFFFFF = unknown)
    20      9*n   records: { u8 channel, u64 timestamp_ps }

The CSV encoding is a two-column document with the exact header line
``channel,timestamp_ps`` followed by one decimal record per line.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, OrderingError, SchemaError

MAGIC = b"TTAG"
FORMAT_VERSION = 1
UNKNOWN_RECORD_COUNT = 0xFFFF_FFFF_FFFF_FFFF
CSV_HEADER = "channel,timestamp_ps"

TRIGGER_CHANNEL = 0
DETECTOR_CHANNELS = (1, 2)

_HEADER = struct.Struct("<4sHIHQ")
HEADER_SIZE = _HEADER.size  # 20 bytes
RECORD_SIZE = 9
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp_ps", "<u8")])

_MAX_TIMESTAMP = 2**64 - 1


@dataclass(frozen=True)
class TimeTagRecord:
    """One detection or trigger event."""

    channel: int
    timestamp_ps: int

    def __post_init__(self):
        if not 0 <= self.channel <= 0xFF:
            raise SchemaError(f"channel {self.channel} outside u8 range")
        if not 0 <= self.timestamp_ps <= _MAX_TIMESTAMP:
            raise SchemaError(f"timestamp {self.timestamp_ps} outside u64 range")


@dataclass(frozen=True)
class StreamHeader:
    """Stream metadata; ``record_count=None`` means 'unknown' (sentinel)."""

    resolution_ps: int
    channel_count: int
    record_count: int | None

    def __post_init__(self):
        if self.resolution_ps < 1:
            raise SchemaError(
                f"resolution_ps must be a positive integer, got {self.resolution_ps}"
            )
        if not 1 <= self.channel_count <= 0xFFFF:
            raise SchemaError(f"channel_count {self.channel_count} outside u16 range")
        if self.record_count is not None and not 0 <= self.record_count < UNKNOWN_RECORD_COUNT:
            raise SchemaError(f"record_count {self.record_count} outside u64 range")


class TimeTagStream:
    """Immutable numpy-backed sequence of :class:`TimeTagRecord`."""

    __slots__ = ("channels", "timestamps_ps")

    def __init__(self, channels, timestamps_ps):
        channels = np.asarray(channels, dtype=np.uint8)
        timestamps_ps = np.asarray(timestamps_ps, dtype=np.uint64)
        if channels.shape != timestamps_ps.shape or channels.ndim != 1:
            raise ValueError("channels and timestamps must be 1-d arrays of equal length")
        channels.setflags(write=False)
        timestamps_ps.setflags(write=False)
        self.channels = channels
        self.timestamps_ps = timestamps_ps

    @classmethod
    def from_records(cls, records) -> "TimeTagStream":
        records = list(records)
        ch = np.fromiter((r.channel for r in records), dtype=np.uint8, count=len(records))
        ts = np.fromiter(
            (r.timestamp_ps for r in records), dtype=np.uint64, count=len(records)
        )
        return cls(ch, ts)

    def __len__(self) -> int:
        return int(self.channels.size)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return TimeTagStream(self.channels[index], self.timestamps_ps[index])
        return TimeTagRecord(int(self.channels[index]), int(self.timestamps_ps[index]))

    def __iter__(self):
        for ch, ts in zip(self.channels, self.timestamps_ps):
            yield TimeTagRecord(int(ch), int(ts))

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(
            self.timestamps_ps, other.timestamps_ps
        )

    def __repr__(self):
        return f"TimeTagStream(n={len(self)})"

    def channel_events(self, channel: int) -> np.ndarray:
        """Timestamps (int64 ps) of all records on one channel."""
        return self.timestamps_ps[self.channels == channel].astype(np.int64)


def _validate_records(channels, timestamps, channel_count, resolution_ps):
    """Shared semantic validation for parse and write paths."""
    if channels.size == 0:
        return
    bad = np.nonzero(channels >= channel_count)[0]
    if bad.size:
        i = int(bad[0])
        raise SchemaError(
            f"unknown channel {int(channels[i])} at record index {i} "
            f"(declared channel_count {channel_count})"
        )
    ts = timestamps
    steps = np.diff(ts.astype(np.int64))
    drop = np.nonzero(steps < 0)[0]
    if drop.size:
        i = int(drop[0]) + 1
        raise OrderingError(
            f"timestamp {int(ts[i])} after {int(ts[i - 1])} is not non-decreasing",
            record_index=i,
        )
    if resolution_ps > 1:
        off = np.nonzero(ts % np.uint64(resolution_ps))[0]
        if off.size:
            i = int(off[0])
            raise SchemaError(
                f"timestamp {int(ts[i])} at record index {i} is not a multiple "
                f"of resolution_ps {resolution_ps}"
            )


def _parse_binary(data: bytes) -> tuple[StreamHeader, TimeTagStream]:
    if len(data) < HEADER_SIZE:
        raise FormatError(
            f"stream truncated: {len(data)} bytes is shorter than the {HEADER_SIZE}-byte header",
            byte_offset=len(data),
        )
    magic, version, resolution_ps, channel_count, record_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", byte_offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", byte_offset=4)
    try:
        header = StreamHeader(
            resolution_ps=resolution_ps,
            channel_count=channel_count,
            record_count=None if record_count == UNKNOWN_RECORD_COUNT else record_count,
        )
    except SchemaError as exc:
        raise FormatError(f"invalid header field: {exc}", byte_offset=6) from exc

    body = len(data) - HEADER_SIZE
    n_records, leftover = divmod(body, RECORD_SIZE)
    if leftover:
        raise FormatError(
            f"trailing {leftover} bytes do not form a complete {RECORD_SIZE}-byte record",
            byte_offset=HEADER_SIZE + n_records * RECORD_SIZE,
        )
    if header.record_count is not None and header.record_count != n_records:
        raise FormatError(
            f"header declares {header.record_count} records but the body holds {n_records}",
            byte_offset=12,
        )
    raw = np.frombuffer(data, dtype=_RECORD_DTYPE, count=n_records, offset=HEADER_SIZE)
    channels = raw["channel"]
    timestamps = raw["timestamp_ps"]
    _validate_records(channels, timestamps, header.channel_count, header.resolution_ps)
    return header, TimeTagStream(channels.copy(), timestamps.copy())


def _parse_csv(data: bytes | str) -> tuple[StreamHeader, TimeTagStream]:
    text = data.decode("ascii") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        got = lines[0].strip() if lines else "<empty document>"
        raise FormatError(f"bad CSV header {got!r}, expected {CSV_HEADER!r}", line_number=1)
    channels = []
    timestamps = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(f"expected 2 columns, got {len(row)}", line_number=lineno)
        try:
            ch = int(row[0])
            ts = int(row[1])
        except ValueError as exc:
            raise FormatError(f"non-integer record field {row!r}", line_number=lineno) from exc
        if not 0 <= ch <= 0xFF:
            raise SchemaError(f"channel {ch} outside u8 range (line {lineno})")
        if not 0 <= ts <= _MAX_TIMESTAMP:
            raise SchemaError(f"timestamp {ts} outside u64 range (line {lineno})")
        channels.append(ch)
        timestamps.append(ts)
    channels = np.asarray(channels, dtype=np.uint8)
    timestamps = np.asarray(timestamps, dtype=np.uint64)
    channel_count = int(channels.max()) + 1 if channels.size else len(DETECTOR_CHANNELS) + 1
    header = StreamHeader(
        resolution_ps=1, channel_count=channel_count, record_count=int(channels.size)
    )
    _validate_records(channels, timestamps, header.channel_count, header.resolution_ps)
    return header, TimeTagStream(channels, timestamps)


def parse_stream(source, format: str = "binary") -> tuple[StreamHeader, TimeTagStream]:
    """Parse a stream document into its header and validated records.

    ``source`` is ``bytes`` (binary) or ``bytes``/``str`` (csv).  Validation
    errors carry a byte offset (binary), line number (csv) or record index.
    """
    if format == "binary":
        if not isinstance(source, (bytes, bytearray, memoryview)):
            raise TypeError("binary parsing expects a bytes-like source")
        return _parse_binary(bytes(source))
    if format == "csv":
        return _parse_csv(source)
    raise ValueError(f"unknown stream format {format!r}")


def _coerce_stream(records) -> TimeTagStream:
    if isinstance(records, TimeTagStream):
        return records
    return TimeTagStream.from_records(records)


def write_stream(header: StreamHeader, records, format: str = "binary") -> bytes:
    """Serialise records under a header, validating before emitting."""
    stream = _coerce_stream(records)
    if header.record_count is not None and header.record_count != len(stream):
        raise SchemaError(
            f"header record_count {header.record_count} does not match "
            f"{len(stream)} records"
        )
    _validate_records(
        stream.channels, stream.timestamps_ps, header.channel_count, header.resolution_ps
    )
    if format == "binary":
        count = UNKNOWN_RECORD_COUNT if header.record_count is None else header.record_count
        head = _HEADER.pack(
            MAGIC, FORMAT_VERSION, header.resolution_ps, header.channel_count, count
        )
        body = np.empty(len(stream), dtype=_RECORD_DTYPE)
        body["channel"] = stream.channels
        body["timestamp_ps"] = stream.timestamps_ps
        return head + body.tobytes()
    if format == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        for ch, ts in zip(stream.channels, stream.timestamps_ps):
            writer.writerow((int(ch), int(ts)))
        return buf.getvalue().encode("ascii")
    raise ValueError(f"unknown stream format {format!r}")


def merge_streams(streams) -> TimeTagStream:
    """Merge record sequences into one stream ordered by
    (timestamp, channel, input-stream index)."""
    streams = [_coerce_stream(s) for s in streams]
    if not streams:
        return TimeTagStream(np.empty(0, np.uint8), np.empty(0, np.uint64))
    channels = np.concatenate([s.channels for s in streams])
    timestamps = np.concatenate([s.timestamps_ps for s in streams])
    origin = np.concatenate(
        [np.full(len(s), i, dtype=np.int32) for i, s in enumerate(streams)]
    )
    order = np.lexsort((origin, channels, timestamps))
    return TimeTagStream(channels[order], timestamps[order])


def read_stream_file(path, format: str | None = None) -> tuple[StreamHeader, TimeTagStream]:
    """Read a stream file; format inferred from the suffix unless given."""
    path = str(path)
    if format is None:
        format = "csv" if path.endswith(".csv") else "binary"
    with open(path, "rb") as fh:
        return parse_stream(fh.read(), format=format)


def write_stream_file(path, header: StreamHeader, records, format: str | None = None) -> None:
    path = str(path)
    if format is None:
        format = "csv" if path.endswith(".csv") else "binary"
    payload = write_stream(header, records, format=format)
    with open(path, "wb") as fh:
        fh.write(payload)

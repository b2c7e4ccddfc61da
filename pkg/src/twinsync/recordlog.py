"""Append-only binary channel log (.dtrl) with crash-safe tail recovery.

Layout (little-endian):
  header: magic "DTRL", version u16, scenario seed u64, created time u64
  record: time u64, channel u16, payload length u32, payload bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

MAGIC = b"DTRL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQQ")
_RECORD_HEAD = struct.Struct("<QHI")

CHANNEL_TELEMETRY = 1
CHANNEL_MOCAP = 2
CHANNEL_COMMAND = 3


class LogError(ValueError):
    pass


@dataclass(frozen=True)
class LogHeader:
    version: int
    seed: int
    created_ns: int


@dataclass(frozen=True)
class LogRecord:
    time_ns: int
    channel: int
    payload: bytes


class LogWriter:
    def __init__(self, path, seed: int, created_ns: int = 0):
        self.path = Path(path)
        self._f = open(self.path, "wb")
        self._f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, seed, created_ns))
        self._last_time = None
        self.count = 0

    def append(self, record: LogRecord) -> None:
        if self._f.closed:
            raise LogError("writer closed")
        if self._last_time is not None and record.time_ns < self._last_time:
            raise LogError("record time regression")
        self._f.write(_RECORD_HEAD.pack(record.time_ns, record.channel,
                                        len(record.payload)))
        self._f.write(record.payload)
        self._last_time = record.time_ns
        self.count += 1

    def close(self) -> None:
        if not self._f.closed:
            self._f.flush()
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class ScanResult:
    header: LogHeader
    records: tuple[LogRecord, ...]
    truncated: bool  # a partial record was dropped at the tail


def read_log(path) -> ScanResult:
    """Read all complete records; a torn tail record is dropped and flagged."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise LogError("file too short for header")
    magic, version, seed, created = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise LogError(f"bad log magic {magic!r}")
    if version != FORMAT_VERSION:
        raise LogError(f"unsupported log version {version}")
    header = LogHeader(version, seed, created)

    records: list[LogRecord] = []
    off = _HEADER.size
    truncated = False
    last_time = None
    while off < len(data):
        if off + _RECORD_HEAD.size > len(data):
            truncated = True
            break
        time_ns, channel, length = _RECORD_HEAD.unpack_from(data, off)
        if off + _RECORD_HEAD.size + length > len(data):
            truncated = True
            break
        payload = data[off + _RECORD_HEAD.size: off + _RECORD_HEAD.size + length]
        if last_time is not None and time_ns < last_time:
            raise LogError(f"record time regression at offset {off}")
        last_time = time_ns
        records.append(LogRecord(time_ns, channel, payload))
        off += _RECORD_HEAD.size + length
    return ScanResult(header, tuple(records), truncated)
